#pragma once

// Least-squares approximability of a standard convolution by grouped (GC) and
// balanced grouped (BGC) convolutions.
//
// For a trial operator W and an input pool {x_s}, s = 1..S, the trial error is
//
//   min over W_m of (1/S) sum_s ||W x_s - W_m x_s||^2
//
// where W_m ranges over GC (or BGC) operators with N groups. The output of a
// convolution is linear in its taps, so the minimization splits into one
// ordinary least-squares problem per output channel. Every output channel of
// group k regresses on the same design matrix: the shifted copies of the
// group-k input channels (plus, for BGC, of the intergroup mean channels),
// stacked over all samples and positions. That matrix depends only on the
// input pool, so its Gram factorization is built once and reused for every
// trial and every output channel of the group.
//
// The approximability estimate is the mean trial error over the trials:
//
//   E = (1/T) sum_t trial_error(W_t)
//   Rel.E = E / (mean_t ||W_t||_param^2 * mean_s ||x_s||^2)

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "bgc/conv.hpp"
#include "bgc/errors.hpp"
#include "bgc/sampling.hpp"

namespace bgc {

enum class Variant { GC, BGC };

std::string to_string(Variant v);

/// The fixed input pool shared by all trials, with its shifted-column
/// expansion.
class InputPool {
 public:
  InputPool(std::vector<MultiChannelSignal> inputs, std::size_t kernel_size,
            Padding padding);

  std::size_t sample_count() const { return inputs_.size(); }
  SignalShape shape() const { return inputs_.front().shape(); }
  std::size_t kernel_size() const { return kernel_size_; }
  Padding padding() const { return padding_; }
  std::size_t rows() const { return sample_count() * shape().length; }
  const std::vector<MultiChannelSignal>& inputs() const { return inputs_; }

  /// rows() x (n K). Row s D + d, column j K + t holds x_s[j][d + t - K/2].
  const Eigen::MatrixXd& columns() const { return columns_; }

  /// Shifted-column expansion of the intergroup means of every input;
  /// rows() x ((n / groups) K).
  Eigen::MatrixXd mean_columns(std::size_t groups) const;

  /// Outputs of `w` on every input, stacked like columns(): rows() x m.
  Eigen::MatrixXd targets(const StandardConv& w) const;

  double mean_squared_norm() const { return mean_sq_norm_; }

 private:
  std::vector<MultiChannelSignal> inputs_;
  std::size_t kernel_size_;
  Padding padding_;
  Eigen::MatrixXd columns_;
  double mean_sq_norm_ = 0.0;
};

/// Shifted-column expansion of a list of equally shaped signals.
Eigen::MatrixXd shifted_columns(std::span<const MultiChannelSignal> signals,
                                std::size_t kernel_size, Padding padding);

/// Least-squares system for one output group k. Columns are the taps of the
/// diagonal block W^kk in (j, t) order, followed for BGC by the taps of the
/// balance block in the same order.
class DesignSystem {
 public:
  /// Cholesky pivots below this fraction of the mean Gram diagonal switch the
  /// system to a rank-revealing solve.
  static constexpr double kPivotTolerance = 1e-12;

  DesignSystem(std::shared_ptr<const InputPool> pool,
               std::shared_ptr<const Eigen::MatrixXd> mean_columns,
               std::size_t groups, Variant variant, std::size_t group);

  std::size_t group() const { return group_; }
  std::size_t groups() const { return groups_; }
  Variant variant() const { return variant_; }
  std::size_t rows() const { return pool_->rows(); }
  std::size_t cols() const;
  const InputPool& pool() const { return *pool_; }

  const Eigen::MatrixXd& gram() const { return gram_; }
  bool rank_deficient() const { return cod_.has_value(); }

  /// Materialized design matrix; the solver itself never copies it.
  Eigen::MatrixXd matrix() const;

  /// Least-squares coefficients for every column of `targets`; minimum-norm
  /// when the system is rank deficient.
  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& targets) const;

  /// Squared Frobenius norm of targets - A solve(targets).
  double residual(const Eigen::Ref<const Eigen::MatrixXd>& targets) const;

 private:
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& coeffs) const;
  Eigen::MatrixXd apply_transpose(
      const Eigen::Ref<const Eigen::MatrixXd>& targets) const;

  std::shared_ptr<const InputPool> pool_;
  std::shared_ptr<const Eigen::MatrixXd> mean_columns_;
  std::size_t groups_;
  Variant variant_;
  std::size_t group_;
  Eigen::Index col_begin_;
  Eigen::Index width_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::optional<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>> cod_;
};

DesignSystem build_design(std::shared_ptr<const InputPool> pool,
                          std::size_t groups, Variant variant,
                          std::size_t group);

/// Designs for every group; BGC designs share one mean-column expansion.
std::vector<DesignSystem> build_designs(std::shared_ptr<const InputPool> pool,
                                        std::size_t groups, Variant variant);

struct TrialResult {
  std::size_t trial = 0;
  /// Per-group residual, already divided by the number of inputs.
  std::vector<double> group_errors;
  double total = 0.0;
  /// Some group needed the rank-revealing fallback.
  bool flagged = false;
};

/// Trial error for precomputed targets (InputPool::targets).
TrialResult solve_trial(std::span<const DesignSystem> designs,
                        const Eigen::MatrixXd& targets, std::size_t trial = 0);
TrialResult solve_trial(std::span<const DesignSystem> designs,
                        const StandardConv& w, std::size_t trial = 0);

struct Estimate {
  double E = 0.0;
  double rel_E = 0.0;
  /// mean ||W_t||_param^2 * mean ||x_s||^2
  double norm_factor = 0.0;
  /// mean over trials and inputs of ||W_t x_s||^2
  double output_energy = 0.0;
  std::size_t flagged_trials = 0;
};

Estimate estimate_E(std::span<const StandardConv> trials,
                    std::shared_ptr<const InputPool> pool, std::size_t groups,
                    Variant variant);

struct Cell {
  Variant variant = Variant::GC;
  std::size_t groups = 1;
};

struct CellEstimate {
  Cell cell;
  Estimate estimate;
  double runtime_ms = 0.0;
};

struct SweepResult {
  std::vector<CellEstimate> cells;
  double mean_param_sq = 0.0;
  double mean_input_sq = 0.0;
  double norm_factor = 0.0;
  double output_energy = 0.0;
};

using TrialFactory = std::function<StandardConv(std::size_t trial)>;

/// Estimates every cell from the same trials and input pool. Trials are
/// distributed over `workers` threads; each trial's target matrix is computed
/// once and shared by all cells. Per-trial results are reduced in trial order,
/// so the estimates do not depend on the worker count.
SweepResult estimate_sweep(std::shared_ptr<const InputPool> pool,
                           std::size_t trial_count, const TrialFactory& trial,
                           std::span<const Cell> cells, std::size_t workers = 1);

struct ScalePoint {
  std::size_t groups = 1;
  double E = 0.0;
};

struct SlopeFit {
  double C = 0.0;
  double gamma = 0.0;
  double intercept = 0.0;
  std::vector<ScalePoint> used;
  std::vector<ScalePoint> excluded;
};

/// Points with E below this fraction of the norm factor are treated as exact
/// and left out of the log fit.
inline constexpr double kLogClamp = 1e-14;

class SlopeFitError : public NumericalError {
 public:
  SlopeFitError(const std::string& what, std::vector<ScalePoint> excluded)
      : NumericalError(what), excluded_(std::move(excluded)) {}
  const std::vector<ScalePoint>& excluded() const { return excluded_; }

 private:
  std::vector<ScalePoint> excluded_;
};

/// OLS fit of log E = log(C * norm_factor) + gamma log(1 - 1/N).
/// N = 1 and clamped points are excluded; throws SlopeFitError if fewer than
/// two distinct N remain.
SlopeFit fit_slope(std::span<const ScalePoint> points, double norm_factor = 1.0);

/// rel_E / (1 - 1/N)^p; N >= 2 and p in {1, 2}.
double bound_ratio(double rel_E, std::size_t groups, int p);

/// Exponent of the sharpened bound: 1 for GC, 2 for BGC.
inline int bound_exponent(Variant v) { return v == Variant::GC ? 1 : 2; }

struct Lemma2Check {
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double lhs_stderr = 0.0;
};

/// Monte Carlo check of E||W x||^2 <= (K/n) E||W||_param^2 E||x||^2 over
/// `samples` independent (W, x) pairs.
Lemma2Check check_lemma2_montecarlo(std::size_t out_channels,
                                    std::size_t in_channels,
                                    std::size_t kernel_size, std::size_t length,
                                    std::size_t samples, std::uint64_t seed,
                                    WeightInit init = WeightInit::He,
                                    InputDistribution dist = InputDistribution::Normal01,
                                    Padding padding = Padding::ZeroSame);

/// Stream ids: weights of trial t use stream t, input s uses
/// kInputStreamBase + s.
inline constexpr std::uint64_t kInputStreamBase = 1ULL << 40;

}  // namespace bgc
