#include "bgc/conv.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace bgc {

namespace {

std::string shape_text(std::size_t a, std::size_t b) {
  return std::to_string(a) + "x" + std::to_string(b);
}

void require_kernel_size(std::size_t k) {
  if (k == 0 || k % 2 == 0) {
    throw ConfigError("kernel size must be odd and positive, got " +
                      std::to_string(k));
  }
}

void require_input_channels(std::size_t expected, std::size_t actual) {
  if (expected != actual) {
    throw DimensionError("input has " + std::to_string(actual) +
                         " channels, operator expects " +
                         std::to_string(expected));
  }
}

// y += w (*) x for one kernel, without allocating.
void accumulate_conv(std::span<const double> taps, const double* x, double* y,
                     std::size_t length, Padding padding) {
  const auto len = static_cast<std::ptrdiff_t>(length);
  const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  for (std::size_t t = 0; t < taps.size(); ++t) {
    const double w = taps[t];
    if (w == 0.0) continue;
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - half;
    if (padding == Padding::ZeroSame) {
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -off);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(len, len - off);
      for (std::ptrdiff_t d = lo; d < hi; ++d) y[d] += w * x[d + off];
    } else {
      for (std::ptrdiff_t d = 0; d < len; ++d) {
        std::ptrdiff_t src = (d + off) % len;
        if (src < 0) src += len;
        y[d] += w * x[src];
      }
    }
  }
}

// Sub-grid of rows [r0, r0 + rows) and columns [c0, c0 + cols).
StandardConv sub_grid(const StandardConv& w, std::size_t r0, std::size_t rows,
                      std::size_t c0, std::size_t cols) {
  StandardConv out(rows, cols, w.kernel_size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto src = w.kernel(r0 + i, c0 + j);
      std::copy(src.begin(), src.end(), out.kernel(i, j).begin());
    }
  }
  return out;
}

void add_into(StandardConv& acc, const StandardConv& term, double scale) {
  auto dst = acc.taps();
  const auto src = term.taps();
  for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += scale * src[p];
}

double squared_taps(std::span<const double> taps) {
  double s = 0.0;
  for (double v : taps) s += v * v;
  return s;
}

}  // namespace

MultiChannelSignal::MultiChannelSignal(SignalShape shape) {
  if (shape.channels == 0 || shape.length == 0) {
    throw ConfigError("signal shape must be positive, got " +
                      shape_text(shape.channels, shape.length));
  }
  values_ = Storage::Zero(static_cast<Eigen::Index>(shape.channels),
                          static_cast<Eigen::Index>(shape.length));
}

MultiChannelSignal::MultiChannelSignal(Storage values)
    : values_(std::move(values)) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw ConfigError("signal shape must be positive");
  }
  if (!values_.allFinite()) {
    throw ConfigError("signal contains non-finite samples");
  }
}

MultiChannelSignal MultiChannelSignal::from_channels(
    std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ConfigError("signal needs at least one channel");
  const std::size_t length = rows.begin()->size();
  Storage values(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(length));
  Eigen::Index c = 0;
  for (const auto& row : rows) {
    if (row.size() != length) {
      throw DimensionError("channels have different lengths");
    }
    Eigen::Index d = 0;
    for (double v : row) values(c, d++) = v;
    ++c;
  }
  return MultiChannelSignal(std::move(values));
}

Kernel::Kernel(std::vector<double> taps) : taps_(std::move(taps)) {
  require_kernel_size(taps_.size());
}

StandardConv::StandardConv(std::size_t out_channels, std::size_t in_channels,
                           std::size_t kernel_size)
    : StandardConv(out_channels, in_channels, kernel_size,
                   std::vector<double>(out_channels * in_channels * kernel_size,
                                       0.0)) {}

StandardConv::StandardConv(std::size_t out_channels, std::size_t in_channels,
                           std::size_t kernel_size, std::vector<double> taps)
    : m_(out_channels), n_(in_channels), k_(kernel_size), taps_(std::move(taps)) {
  if (m_ == 0 || n_ == 0) {
    throw ConfigError("convolution needs positive channel counts, got " +
                      shape_text(m_, n_));
  }
  require_kernel_size(k_);
  if (taps_.size() != m_ * n_ * k_) {
    throw DimensionError("expected " + std::to_string(m_ * n_ * k_) +
                         " taps, got " + std::to_string(taps_.size()));
  }
}

void StandardConv::set_kernel(std::size_t i, std::size_t j,
                              const Kernel& kernel) {
  if (kernel.size() != k_) {
    throw DimensionError("kernel has " + std::to_string(kernel.size()) +
                         " taps, operator uses " + std::to_string(k_));
  }
  const auto src = kernel.taps();
  std::copy(src.begin(), src.end(), this->kernel(i, j).begin());
}

GroupedConv::GroupedConv(std::vector<StandardConv> diag_blocks)
    : blocks_(std::move(diag_blocks)) {
  if (blocks_.empty()) throw ConfigError("grouped convolution needs a block");
  const auto& first = blocks_.front();
  for (const auto& b : blocks_) {
    if (b.out_channels() != first.out_channels() ||
        b.in_channels() != first.in_channels() ||
        b.kernel_size() != first.kernel_size()) {
      throw DimensionError("diagonal blocks must share one shape");
    }
  }
}

std::size_t GroupedConv::parameter_count() const {
  return groups() * blocks_.front().parameter_count();
}

BalancedConv::BalancedConv(GroupedConv base,
                           std::vector<StandardConv> balance_blocks)
    : base_(std::move(base)), balance_(std::move(balance_blocks)) {
  if (balance_.size() != base_.groups()) {
    throw DimensionError("expected " + std::to_string(base_.groups()) +
                         " balance blocks, got " +
                         std::to_string(balance_.size()));
  }
  const auto& ref = base_.block(0);
  for (const auto& b : balance_) {
    if (b.out_channels() != ref.out_channels() ||
        b.in_channels() != ref.in_channels() ||
        b.kernel_size() != ref.kernel_size()) {
      throw DimensionError("balance blocks must match the diagonal blocks");
    }
  }
}

std::size_t BalancedConv::parameter_count() const {
  return 2 * base_.parameter_count();
}

void require_divisible(std::size_t out_channels, std::size_t in_channels,
                       std::size_t groups) {
  if (groups == 0 || out_channels % groups != 0 || in_channels % groups != 0) {
    throw ConfigError("group count " + std::to_string(groups) +
                      " must divide m=" + std::to_string(out_channels) +
                      " and n=" + std::to_string(in_channels));
  }
}

std::vector<double> conv_single(std::span<const double> taps,
                                std::span<const double> channel,
                                Padding padding) {
  require_kernel_size(taps.size());
  if (channel.empty()) throw DimensionError("channel must be non-empty");
  std::vector<double> out(channel.size(), 0.0);
  accumulate_conv(taps, channel.data(), out.data(), channel.size(), padding);
  return out;
}

MultiChannelSignal forward_standard(const StandardConv& w,
                                    const MultiChannelSignal& x,
                                    Padding padding) {
  require_input_channels(w.in_channels(), x.channels());
  MultiChannelSignal y(w.out_channels(), x.length());
  for (std::size_t i = 0; i < w.out_channels(); ++i) {
    double* out = y.channel(i).data();
    for (std::size_t j = 0; j < w.in_channels(); ++j) {
      accumulate_conv(w.kernel(i, j), x.channel(j).data(), out, x.length(),
                      padding);
    }
  }
  return y;
}

namespace {

// y^k += B^k x^k for every group, where x_of(k) supplies the group input.
template <typename InputOf>
void accumulate_grouped(std::span<const StandardConv> blocks, InputOf x_of,
                        MultiChannelSignal& y, Padding padding) {
  const std::size_t mg = blocks.front().out_channels();
  const std::size_t ng = blocks.front().in_channels();
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    for (std::size_t i = 0; i < mg; ++i) {
      double* out = y.channel(k * mg + i).data();
      for (std::size_t j = 0; j < ng; ++j) {
        accumulate_conv(b.kernel(i, j), x_of(k, j), out, y.length(), padding);
      }
    }
  }
}

}  // namespace

MultiChannelSignal forward_group(const GroupedConv& w,
                                 const MultiChannelSignal& x,
                                 Padding padding) {
  require_input_channels(w.in_channels(), x.channels());
  MultiChannelSignal y(w.out_channels(), x.length());
  const std::size_t ng = w.block(0).in_channels();
  accumulate_grouped(
      w.blocks(),
      [&](std::size_t k, std::size_t j) { return x.channel(k * ng + j).data(); },
      y, padding);
  return y;
}

MultiChannelSignal forward_balanced(const BalancedConv& w,
                                    const MultiChannelSignal& x,
                                    Padding padding) {
  MultiChannelSignal y = forward_group(w.base(), x, padding);
  const MultiChannelSignal mean = intergroup_mean(x, w.groups());
  accumulate_grouped(
      w.balance_blocks(),
      [&](std::size_t, std::size_t j) { return mean.channel(j).data(); }, y,
      padding);
  return y;
}

MultiChannelSignal intergroup_mean(const MultiChannelSignal& x,
                                   std::size_t groups) {
  if (groups == 0 || x.channels() % groups != 0) {
    throw ConfigError("group count " + std::to_string(groups) +
                      " must divide n=" + std::to_string(x.channels()));
  }
  const auto ng = static_cast<Eigen::Index>(x.channels() / groups);
  MultiChannelSignal mean(static_cast<std::size_t>(ng), x.length());
  for (std::size_t k = 0; k < groups; ++k) {
    mean.values() += x.values().middleRows(static_cast<Eigen::Index>(k) * ng, ng);
  }
  mean.values() /= static_cast<double>(groups);
  return mean;
}

StandardConv group_block(const StandardConv& w, std::size_t groups,
                         std::size_t k, std::size_t l) {
  require_divisible(w.out_channels(), w.in_channels(), groups);
  const std::size_t mg = w.out_channels() / groups;
  const std::size_t ng = w.in_channels() / groups;
  return sub_grid(w, k * mg, mg, l * ng, ng);
}

GroupedConv extract_block_diagonal(const StandardConv& w, std::size_t groups) {
  require_divisible(w.out_channels(), w.in_channels(), groups);
  std::vector<StandardConv> blocks;
  blocks.reserve(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    blocks.push_back(group_block(w, groups, k, k));
  }
  return GroupedConv(std::move(blocks));
}

BalancedConv balanced_from_standard(const StandardConv& w, std::size_t groups) {
  GroupedConv base = extract_block_diagonal(w, groups);
  const std::size_t mg = w.out_channels() / groups;
  const std::size_t ng = w.in_channels() / groups;
  std::vector<StandardConv> balance;
  balance.reserve(groups);
  for (std::size_t k = 0; k < groups; ++k) {
    StandardConv acc(mg, ng, w.kernel_size());
    for (std::size_t l = 0; l < groups; ++l) {
      if (l != k) add_into(acc, group_block(w, groups, k, l), 1.0);
    }
    balance.push_back(std::move(acc));
  }
  return BalancedConv(std::move(base), std::move(balance));
}

BalancedConv balanced_exact_two_groups(const StandardConv& w) {
  require_divisible(w.out_channels(), w.in_channels(), 2);
  std::vector<StandardConv> diag;
  std::vector<StandardConv> balance;
  for (std::size_t k = 0; k < 2; ++k) {
    const std::size_t other = 1 - k;
    StandardConv d = group_block(w, 2, k, k);
    const StandardConv off = group_block(w, 2, k, other);
    add_into(d, off, -1.0);
    StandardConv b(off.out_channels(), off.in_channels(), off.kernel_size());
    add_into(b, off, 2.0);
    diag.push_back(std::move(d));
    balance.push_back(std::move(b));
  }
  return BalancedConv(GroupedConv(std::move(diag)), std::move(balance));
}

double param_l2_norm(const StandardConv& w) {
  return std::sqrt(squared_taps(w.taps()));
}

double param_l2_norm(const GroupedConv& w) {
  double s = 0.0;
  for (const auto& b : w.blocks()) s += squared_taps(b.taps());
  return std::sqrt(s);
}

double param_l2_norm(const BalancedConv& w) {
  double s = 0.0;
  for (const auto& b : w.base().blocks()) s += squared_taps(b.taps());
  for (const auto& b : w.balance_blocks()) s += squared_taps(b.taps());
  return std::sqrt(s);
}

YoungCheck check_young(const StandardConv& w, const MultiChannelSignal& x,
                       Padding padding) {
  YoungCheck r;
  r.lhs = forward_standard(w, x, padding).norm();
  r.rhs = std::sqrt(static_cast<double>(w.kernel_size())) * param_l2_norm(w) *
          x.norm();
  r.holds = r.lhs <= r.rhs * (1.0 + kYoungSlack);
  return r;
}

}  // namespace bgc
