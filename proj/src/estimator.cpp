#include "bgc/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>
#include <utility>

namespace bgc {

std::string to_string(Variant v) { return v == Variant::GC ? "GC" : "BGC"; }

Eigen::MatrixXd shifted_columns(std::span<const MultiChannelSignal> signals,
                                std::size_t kernel_size, Padding padding) {
  if (signals.empty()) throw ConfigError("no signals to expand");
  const SignalShape shape = signals.front().shape();
  const auto len = static_cast<std::ptrdiff_t>(shape.length);
  const auto half = static_cast<std::ptrdiff_t>(kernel_size / 2);
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(signals.size() * shape.length),
      static_cast<Eigen::Index>(shape.channels * kernel_size));
  for (std::size_t s = 0; s < signals.size(); ++s) {
    if (signals[s].shape() != shape) {
      throw DimensionError("input signals must share one shape");
    }
    const auto row0 = static_cast<Eigen::Index>(s * shape.length);
    for (std::size_t j = 0; j < shape.channels; ++j) {
      const auto x = signals[s].channel(j);
      for (std::size_t t = 0; t < kernel_size; ++t) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - half;
        double* col = cols.col(static_cast<Eigen::Index>(j * kernel_size + t)).data() + row0;
        for (std::ptrdiff_t d = 0; d < len; ++d) {
          std::ptrdiff_t src = d + off;
          if (padding == Padding::Circular) {
            src %= len;
            if (src < 0) src += len;
          } else if (src < 0 || src >= len) {
            continue;
          }
          col[d] = x[static_cast<std::size_t>(src)];
        }
      }
    }
  }
  return cols;
}

InputPool::InputPool(std::vector<MultiChannelSignal> inputs,
                     std::size_t kernel_size, Padding padding)
    : inputs_(std::move(inputs)), kernel_size_(kernel_size), padding_(padding) {
  if (inputs_.empty()) throw ConfigError("input pool is empty");
  if (kernel_size_ == 0 || kernel_size_ % 2 == 0) {
    throw ConfigError("kernel size must be odd and positive");
  }
  columns_ = shifted_columns(inputs_, kernel_size_, padding_);
  double sum = 0.0;
  for (const auto& x : inputs_) sum += x.squared_norm();
  mean_sq_norm_ = sum / static_cast<double>(inputs_.size());
}

Eigen::MatrixXd InputPool::mean_columns(std::size_t groups) const {
  std::vector<MultiChannelSignal> means;
  means.reserve(inputs_.size());
  for (const auto& x : inputs_) means.push_back(intergroup_mean(x, groups));
  return shifted_columns(means, kernel_size_, padding_);
}

Eigen::MatrixXd InputPool::targets(const StandardConv& w) const {
  if (w.in_channels() != shape().channels) {
    throw DimensionError("operator expects " + std::to_string(w.in_channels()) +
                         " input channels, pool has " +
                         std::to_string(shape().channels));
  }
  if (w.kernel_size() != kernel_size_) {
    throw DimensionError("operator kernel size " +
                         std::to_string(w.kernel_size()) +
                         " differs from pool kernel size " +
                         std::to_string(kernel_size_));
  }
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> taps(
      w.taps().data(), static_cast<Eigen::Index>(w.out_channels()),
      static_cast<Eigen::Index>(w.in_channels() * w.kernel_size()));
  return columns_ * taps.transpose();
}

DesignSystem::DesignSystem(std::shared_ptr<const InputPool> pool,
                           std::shared_ptr<const Eigen::MatrixXd> mean_columns,
                           std::size_t groups, Variant variant,
                           std::size_t group)
    : pool_(std::move(pool)),
      mean_columns_(std::move(mean_columns)),
      groups_(groups),
      variant_(variant),
      group_(group) {
  const std::size_t n = pool_->shape().channels;
  if (groups_ == 0 || n % groups_ != 0) {
    throw ConfigError("group count " + std::to_string(groups_) +
                      " must divide n=" + std::to_string(n));
  }
  if (group_ >= groups_) {
    throw ConfigError("group index " + std::to_string(group_) +
                      " out of range for " + std::to_string(groups_) +
                      " groups");
  }
  width_ = static_cast<Eigen::Index>(n / groups_ * pool_->kernel_size());
  col_begin_ = static_cast<Eigen::Index>(group_) * width_;
  if (variant_ == Variant::BGC) {
    if (!mean_columns_) {
      mean_columns_ =
          std::make_shared<const Eigen::MatrixXd>(pool_->mean_columns(groups_));
    }
    if (mean_columns_->rows() != static_cast<Eigen::Index>(rows()) ||
        mean_columns_->cols() != width_) {
      throw DimensionError("mean columns do not match the input pool");
    }
  }
  if (rows() < cols()) {
    throw ConfigError("underdetermined system: " + std::to_string(rows()) +
                      " rows (S*D) for " + std::to_string(cols()) +
                      " unknowns per output channel; increase S or D");
  }

  const auto own = pool_->columns().middleCols(col_begin_, width_);
  if (variant_ == Variant::GC) {
    gram_ = own.transpose() * own;
  } else {
    const auto& mean = *mean_columns_;
    gram_.resize(2 * width_, 2 * width_);
    gram_.topLeftCorner(width_, width_) = own.transpose() * own;
    gram_.topRightCorner(width_, width_) = own.transpose() * mean;
    gram_.bottomLeftCorner(width_, width_) =
        gram_.topRightCorner(width_, width_).transpose();
    gram_.bottomRightCorner(width_, width_) = mean.transpose() * mean;
  }

  llt_.compute(gram_);
  const double scale = gram_.trace() / static_cast<double>(gram_.rows());
  bool ok = llt_.info() == Eigen::Success && scale > 0.0;
  if (ok) {
    const double min_pivot = llt_.matrixLLT().diagonal().cwiseAbs2().minCoeff();
    ok = min_pivot >= kPivotTolerance * scale;
  }
  if (!ok) cod_.emplace(matrix());
}

std::size_t DesignSystem::cols() const {
  return static_cast<std::size_t>(variant_ == Variant::GC ? width_ : 2 * width_);
}

Eigen::MatrixXd DesignSystem::matrix() const {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows()),
                    static_cast<Eigen::Index>(cols()));
  a.leftCols(width_) = pool_->columns().middleCols(col_begin_, width_);
  if (variant_ == Variant::BGC) a.rightCols(width_) = *mean_columns_;
  return a;
}

Eigen::MatrixXd DesignSystem::apply(
    const Eigen::Ref<const Eigen::MatrixXd>& coeffs) const {
  Eigen::MatrixXd out =
      pool_->columns().middleCols(col_begin_, width_) * coeffs.topRows(width_);
  if (variant_ == Variant::BGC) {
    out.noalias() += *mean_columns_ * coeffs.bottomRows(width_);
  }
  return out;
}

Eigen::MatrixXd DesignSystem::apply_transpose(
    const Eigen::Ref<const Eigen::MatrixXd>& targets) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(cols()), targets.cols());
  out.topRows(width_).noalias() =
      pool_->columns().middleCols(col_begin_, width_).transpose() * targets;
  if (variant_ == Variant::BGC) {
    out.bottomRows(width_).noalias() = mean_columns_->transpose() * targets;
  }
  return out;
}

Eigen::MatrixXd DesignSystem::solve(
    const Eigen::Ref<const Eigen::MatrixXd>& targets) const {
  if (targets.rows() != static_cast<Eigen::Index>(rows())) {
    throw DimensionError("targets have " + std::to_string(targets.rows()) +
                         " rows, design has " + std::to_string(rows()));
  }
  if (cod_) return cod_->solve(targets);
  return llt_.solve(apply_transpose(targets));
}

double DesignSystem::residual(
    const Eigen::Ref<const Eigen::MatrixXd>& targets) const {
  return (targets - apply(solve(targets))).squaredNorm();
}

DesignSystem build_design(std::shared_ptr<const InputPool> pool,
                          std::size_t groups, Variant variant,
                          std::size_t group) {
  return DesignSystem(std::move(pool), nullptr, groups, variant, group);
}

std::vector<DesignSystem> build_designs(std::shared_ptr<const InputPool> pool,
                                        std::size_t groups, Variant variant) {
  const std::size_t n = pool->shape().channels;
  if (groups == 0 || n % groups != 0) {
    throw ConfigError("group count " + std::to_string(groups) +
                      " must divide n=" + std::to_string(n));
  }
  std::shared_ptr<const Eigen::MatrixXd> mean;
  if (variant == Variant::BGC) {
    mean = std::make_shared<const Eigen::MatrixXd>(pool->mean_columns(groups));
  }
  std::vector<DesignSystem> designs;
  designs.reserve(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    designs.emplace_back(pool, mean, groups, variant, k);
  }
  return designs;
}

TrialResult solve_trial(std::span<const DesignSystem> designs,
                        const Eigen::MatrixXd& targets, std::size_t trial) {
  if (designs.empty()) throw ConfigError("no designs to solve");
  const std::size_t groups = designs.front().groups();
  if (designs.size() != groups) {
    throw ConfigError("expected one design per group (" +
                      std::to_string(groups) + "), got " +
                      std::to_string(designs.size()));
  }
  const auto m = static_cast<std::size_t>(targets.cols());
  if (m % groups != 0) {
    throw ConfigError("group count " + std::to_string(groups) +
                      " must divide m=" + std::to_string(m));
  }
  const auto mg = static_cast<Eigen::Index>(m / groups);
  const double inv_s = 1.0 / static_cast<double>(designs.front().pool().sample_count());

  TrialResult r;
  r.trial = trial;
  r.group_errors.reserve(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    const auto& d = designs[k];
    if (d.group() != k) throw ConfigError("designs must be ordered by group");
    const double e =
        d.residual(targets.middleCols(static_cast<Eigen::Index>(k) * mg, mg)) *
        inv_s;
    if (!std::isfinite(e)) {
      throw NumericalError("non-finite residual in trial " +
                           std::to_string(trial) + ", group " +
                           std::to_string(k));
    }
    r.group_errors.push_back(e);
    r.total += e;
    r.flagged = r.flagged || d.rank_deficient();
  }
  return r;
}

TrialResult solve_trial(std::span<const DesignSystem> designs,
                        const StandardConv& w, std::size_t trial) {
  if (designs.empty()) throw ConfigError("no designs to solve");
  return solve_trial(designs, designs.front().pool().targets(w), trial);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

SweepResult estimate_sweep(std::shared_ptr<const InputPool> pool,
                           std::size_t trial_count, const TrialFactory& trial,
                           std::span<const Cell> cells, std::size_t workers) {
  if (trial_count == 0) throw ConfigError("trial list is empty");
  if (!pool) throw ConfigError("input pool is missing");
  const std::size_t n_cells = cells.size();

  std::vector<std::vector<DesignSystem>> designs;
  std::vector<double> build_ms;
  designs.reserve(n_cells);
  for (const Cell& c : cells) {
    const auto start = Clock::now();
    designs.push_back(build_designs(pool, c.groups, c.variant));
    build_ms.push_back(elapsed_ms(start));
  }

  // Per-trial slots, written once each and reduced in trial order below.
  std::vector<double> errors(trial_count * n_cells, 0.0);
  std::vector<char> flagged(trial_count * n_cells, 0);
  std::vector<double> param_sq(trial_count, 0.0);
  std::vector<double> energy(trial_count, 0.0);

  workers = std::max<std::size_t>(1, std::min(workers, trial_count));
  std::vector<std::vector<double>> solve_ms(workers,
                                            std::vector<double>(n_cells, 0.0));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto work = [&](std::size_t worker) {
    try {
      for (std::size_t t = next++; t < trial_count && !failed; t = next++) {
        const StandardConv w = trial(t);
        const double norm = param_l2_norm(w);
        param_sq[t] = norm * norm;
        const Eigen::MatrixXd targets = pool->targets(w);
        energy[t] = targets.squaredNorm() /
                    static_cast<double>(pool->sample_count());
        for (std::size_t c = 0; c < n_cells; ++c) {
          const auto start = Clock::now();
          const TrialResult r = solve_trial(designs[c], targets, t);
          errors[t * n_cells + c] = r.total;
          flagged[t * n_cells + c] = r.flagged ? 1 : 0;
          solve_ms[worker][c] += elapsed_ms(start);
        }
      }
    } catch (...) {
      if (!failed.exchange(true)) failure = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) threads.emplace_back(work, i);
    for (auto& th : threads) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  const double inv_t = 1.0 / static_cast<double>(trial_count);
  SweepResult out;
  for (std::size_t t = 0; t < trial_count; ++t) {
    out.mean_param_sq += param_sq[t];
    out.output_energy += energy[t];
  }
  out.mean_param_sq *= inv_t;
  out.output_energy *= inv_t;
  out.mean_input_sq = pool->mean_squared_norm();
  out.norm_factor = out.mean_param_sq * out.mean_input_sq;

  for (std::size_t c = 0; c < n_cells; ++c) {
    CellEstimate ce;
    ce.cell = cells[c];
    double sum = 0.0;
    for (std::size_t t = 0; t < trial_count; ++t) {
      sum += errors[t * n_cells + c];
      ce.estimate.flagged_trials += flagged[t * n_cells + c] ? 1 : 0;
    }
    ce.estimate.E = sum * inv_t;
    ce.estimate.norm_factor = out.norm_factor;
    ce.estimate.output_energy = out.output_energy;
    ce.estimate.rel_E = out.norm_factor > 0.0 ? ce.estimate.E / out.norm_factor : 0.0;
    ce.runtime_ms = build_ms[c];
    for (const auto& per_worker : solve_ms) ce.runtime_ms += per_worker[c];
    out.cells.push_back(ce);
  }
  return out;
}

Estimate estimate_E(std::span<const StandardConv> trials,
                    std::shared_ptr<const InputPool> pool, std::size_t groups,
                    Variant variant) {
  if (trials.empty()) throw ConfigError("trial list is empty");
  const auto& first = trials.front();
  for (const auto& w : trials) {
    if (w.out_channels() != first.out_channels() ||
        w.in_channels() != first.in_channels() ||
        w.kernel_size() != first.kernel_size()) {
      throw DimensionError("trials must share (m, n, K)");
    }
  }
  const Cell cell{variant, groups};
  const SweepResult r = estimate_sweep(
      std::move(pool), trials.size(),
      [&](std::size_t t) { return trials[t]; }, std::span<const Cell>(&cell, 1));
  return r.cells.front().estimate;
}

SlopeFit fit_slope(std::span<const ScalePoint> points, double norm_factor) {
  SlopeFit fit;
  const double floor = kLogClamp * norm_factor;
  for (const auto& p : points) {
    if (p.groups < 2 || !(p.E > floor) || !std::isfinite(p.E)) {
      fit.excluded.push_back(p);
    } else {
      fit.used.push_back(p);
    }
  }
  bool distinct = false;
  for (const auto& p : fit.used) {
    distinct = distinct || p.groups != fit.used.front().groups;
  }
  if (fit.used.size() < 2 || !distinct) {
    std::string msg = "slope fit needs at least two usable points with distinct N";
    if (!fit.excluded.empty()) {
      msg += "; excluded:";
      for (const auto& p : fit.excluded) {
        msg += " (N=" + std::to_string(p.groups) + ", E=" + std::to_string(p.E) + ")";
      }
    }
    throw SlopeFitError(msg, fit.excluded);
  }

  const double count = static_cast<double>(fit.used.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : fit.used) {
    mx += std::log1p(-1.0 / static_cast<double>(p.groups));
    my += std::log(p.E);
  }
  mx /= count;
  my /= count;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& p : fit.used) {
    const double dx = std::log1p(-1.0 / static_cast<double>(p.groups)) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(p.E) - my);
  }
  fit.gamma = sxy / sxx;
  fit.intercept = my - fit.gamma * mx;
  fit.C = std::exp(fit.intercept) / (norm_factor > 0.0 ? norm_factor : 1.0);
  return fit;
}

double bound_ratio(double rel_E, std::size_t groups, int p) {
  if (groups < 2) {
    throw std::domain_error("bound ratio is undefined for N=" +
                            std::to_string(groups));
  }
  if (p != 1 && p != 2) {
    throw std::domain_error("bound exponent must be 1 or 2, got " +
                            std::to_string(p));
  }
  return rel_E / std::pow(1.0 - 1.0 / static_cast<double>(groups), p);
}

Lemma2Check check_lemma2_montecarlo(std::size_t out_channels,
                                    std::size_t in_channels,
                                    std::size_t kernel_size, std::size_t length,
                                    std::size_t samples, std::uint64_t seed,
                                    WeightInit init, InputDistribution dist,
                                    Padding padding) {
  if (samples < 2) throw ConfigError("Monte Carlo check needs at least 2 samples");
  double sum = 0.0;
  double sum_sq = 0.0;
  double w_sq = 0.0;
  double x_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const StandardConv w = init_standard_conv(out_channels, in_channels,
                                              kernel_size, init, {seed, s});
    const MultiChannelSignal x =
        sample_input({in_channels, length}, dist, {seed, kInputStreamBase + s});
    const double v = forward_standard(w, x, padding).squared_norm();
    sum += v;
    sum_sq += v * v;
    const double wn = param_l2_norm(w);
    w_sq += wn * wn;
    x_sq += x.squared_norm();
  }
  const double count = static_cast<double>(samples);
  Lemma2Check r;
  r.lhs = sum / count;
  const double var = (sum_sq - count * r.lhs * r.lhs) / (count - 1.0);
  r.lhs_stderr = std::sqrt(std::max(var, 0.0) / count);
  r.rhs = static_cast<double>(kernel_size) / static_cast<double>(in_channels) *
          (w_sq / count) * (x_sq / count);
  r.margin = r.rhs - r.lhs;
  return r;
}

}  // namespace bgc
