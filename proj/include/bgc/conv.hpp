#pragma once

// Standard, grouped and balanced grouped 1-D convolutions written as explicit
// linear operators on multi-channel signals.
//
// A convolution with m output and n input channels is an m x n grid of
// single-channel kernels. Kernel (i, j) maps input channel j to a contribution
// of output channel i. Kernels have an odd number K of taps centred on the
// output sample, so outputs have the same length as inputs:
//
//   y_i[d] = sum_j sum_t w_ij[t] * x_j[d + t - (K - 1) / 2]
//
// Samples outside [0, D) are zero (Padding::ZeroSame) or wrap around
// (Padding::Circular). There are no bias terms.
//
// Grouping splits channels into N contiguous ranges of equal size. A grouped
// convolution keeps only the diagonal blocks W^kk. A balanced grouped
// convolution adds, for every output group k, a block applied to the
// intergroup mean of the input groups.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bgc/errors.hpp"

namespace bgc {

enum class Padding { ZeroSame, Circular };

struct SignalShape {
  std::size_t channels = 1;
  std::size_t length = 1;

  friend bool operator==(const SignalShape&, const SignalShape&) = default;
};

/// n channels of D real samples each. Channel c occupies row c of a row-major
/// matrix, so each channel is contiguous.
class MultiChannelSignal {
 public:
  using Storage =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit MultiChannelSignal(SignalShape shape);
  MultiChannelSignal(std::size_t channels, std::size_t length)
      : MultiChannelSignal(SignalShape{channels, length}) {}
  explicit MultiChannelSignal(Storage values);

  /// One row per channel; all rows must have the same length.
  static MultiChannelSignal from_channels(
      std::initializer_list<std::initializer_list<double>> rows);

  SignalShape shape() const {
    return {static_cast<std::size_t>(values_.rows()),
            static_cast<std::size_t>(values_.cols())};
  }
  std::size_t channels() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(values_.cols()); }

  double operator()(std::size_t c, std::size_t d) const { return values_(c, d); }
  double& operator()(std::size_t c, std::size_t d) { return values_(c, d); }

  std::span<const double> channel(std::size_t c) const {
    return {values_.data() + c * length(), length()};
  }
  std::span<double> channel(std::size_t c) {
    return {values_.data() + c * length(), length()};
  }

  const Storage& values() const { return values_; }
  Storage& values() { return values_; }

  /// Flat l2 norm over all channels and positions.
  double norm() const { return values_.norm(); }
  double squared_norm() const { return values_.squaredNorm(); }

 private:
  Storage values_;
};

/// Single-channel kernel with an odd number of taps.
class Kernel {
 public:
  explicit Kernel(std::vector<double> taps);
  Kernel(std::initializer_list<double> taps)
      : Kernel(std::vector<double>(taps)) {}

  std::size_t size() const { return taps_.size(); }
  std::span<const double> taps() const { return taps_; }

 private:
  std::vector<double> taps_;
};

/// Dense m x n grid of K-tap kernels. Taps are stored as
/// [(i * n + j) * K + t], which is also the coefficient layout used by the
/// least-squares estimator.
class StandardConv {
 public:
  /// All-zero operator.
  StandardConv(std::size_t out_channels, std::size_t in_channels,
               std::size_t kernel_size);
  StandardConv(std::size_t out_channels, std::size_t in_channels,
               std::size_t kernel_size, std::vector<double> taps);

  std::size_t out_channels() const { return m_; }
  std::size_t in_channels() const { return n_; }
  std::size_t kernel_size() const { return k_; }
  std::size_t parameter_count() const { return taps_.size(); }

  std::span<const double> kernel(std::size_t i, std::size_t j) const {
    return {taps_.data() + (i * n_ + j) * k_, k_};
  }
  std::span<double> kernel(std::size_t i, std::size_t j) {
    return {taps_.data() + (i * n_ + j) * k_, k_};
  }
  void set_kernel(std::size_t i, std::size_t j, const Kernel& kernel);

  std::span<const double> taps() const { return taps_; }
  std::span<double> taps() { return taps_; }

  friend bool operator==(const StandardConv&, const StandardConv&) = default;

 private:
  std::size_t m_;
  std::size_t n_;
  std::size_t k_;
  std::vector<double> taps_;
};

/// Block-diagonal convolution: N blocks, block k maps input group k to output
/// group k and is an (m/N) x (n/N) StandardConv.
class GroupedConv {
 public:
  explicit GroupedConv(std::vector<StandardConv> diag_blocks);

  std::size_t groups() const { return blocks_.size(); }
  std::size_t out_channels() const { return groups() * blocks_.front().out_channels(); }
  std::size_t in_channels() const { return groups() * blocks_.front().in_channels(); }
  std::size_t kernel_size() const { return blocks_.front().kernel_size(); }
  std::size_t parameter_count() const;

  const StandardConv& block(std::size_t k) const { return blocks_[k]; }
  StandardConv& block(std::size_t k) { return blocks_[k]; }
  std::span<const StandardConv> blocks() const { return blocks_; }

 private:
  std::vector<StandardConv> blocks_;
};

/// Grouped convolution plus one balance block per output group, applied to the
/// intergroup mean of the input.
class BalancedConv {
 public:
  BalancedConv(GroupedConv base, std::vector<StandardConv> balance_blocks);

  const GroupedConv& base() const { return base_; }
  std::size_t groups() const { return base_.groups(); }
  std::size_t out_channels() const { return base_.out_channels(); }
  std::size_t in_channels() const { return base_.in_channels(); }
  std::size_t kernel_size() const { return base_.kernel_size(); }
  std::size_t parameter_count() const;

  const StandardConv& balance_block(std::size_t k) const { return balance_[k]; }
  StandardConv& balance_block(std::size_t k) { return balance_[k]; }
  std::span<const StandardConv> balance_blocks() const { return balance_; }

 private:
  GroupedConv base_;
  std::vector<StandardConv> balance_;
};

/// Throws ConfigError unless `groups` is positive and divides both counts.
void require_divisible(std::size_t out_channels, std::size_t in_channels,
                       std::size_t groups);

std::vector<double> conv_single(std::span<const double> taps,
                                std::span<const double> channel,
                                Padding padding = Padding::ZeroSame);
inline std::vector<double> conv_single(const Kernel& kernel,
                                       std::span<const double> channel,
                                       Padding padding = Padding::ZeroSame) {
  return conv_single(kernel.taps(), channel, padding);
}

MultiChannelSignal forward_standard(const StandardConv& w,
                                    const MultiChannelSignal& x,
                                    Padding padding = Padding::ZeroSame);
MultiChannelSignal forward_group(const GroupedConv& w,
                                 const MultiChannelSignal& x,
                                 Padding padding = Padding::ZeroSame);
MultiChannelSignal forward_balanced(const BalancedConv& w,
                                    const MultiChannelSignal& x,
                                    Padding padding = Padding::ZeroSame);

/// Channel-wise average of the N input groups; an (n/N)-channel signal.
MultiChannelSignal intergroup_mean(const MultiChannelSignal& x,
                                   std::size_t groups);

/// Sub-grid W^{kl}: output group k, input group l.
StandardConv group_block(const StandardConv& w, std::size_t groups,
                         std::size_t k, std::size_t l);

GroupedConv extract_block_diagonal(const StandardConv& w, std::size_t groups);

/// Diagonal blocks W^kk and balance blocks sum_{l != k} W^kl.
BalancedConv balanced_from_standard(const StandardConv& w, std::size_t groups);

/// Two-group balanced convolution that reproduces `w` exactly:
/// diagonal W^kk - W^kl and balance 2 W^kl, where l is the other group.
BalancedConv balanced_exact_two_groups(const StandardConv& w);

double param_l2_norm(const StandardConv& w);
double param_l2_norm(const GroupedConv& w);
double param_l2_norm(const BalancedConv& w);

struct YoungCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// Relative slack used by check_young.
inline constexpr double kYoungSlack = 1e-9;

/// ||W x|| <= sqrt(K) ||W||_param ||x||, accepted up to kYoungSlack relative.
YoungCheck check_young(const StandardConv& w, const MultiChannelSignal& x,
                       Padding padding = Padding::ZeroSame);

}  // namespace bgc
