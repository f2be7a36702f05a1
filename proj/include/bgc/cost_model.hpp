#pragma once

// Analytical parameter and arithmetic-operation counts for one layer.
// One operation is one multiply-accumulate of a tap with an input sample; the
// intergroup mean of a balanced layer costs one operation per input sample.
// 2-D layers map onto this 1-D model with K = total taps (9 for 3x3) and
// D = total spatial positions.

#include <cstdint>

namespace bgc {

enum class LayerVariant { Standard, GC, BGC };

struct LayerSpec {
  std::uint64_t m = 1;
  std::uint64_t n = 1;
  std::uint64_t K = 1;
  std::uint64_t D = 1;
  std::uint64_t N = 1;
  LayerVariant variant = LayerVariant::Standard;
};

struct CostBreakdown {
  std::uint64_t conv_ops = 0;
  std::uint64_t mean_ops = 0;
  std::uint64_t total_ops = 0;
  std::uint64_t param_count = 0;

  friend bool operator==(const CostBreakdown&, const CostBreakdown&) = default;
};

/// Standard: K D m n. GC: K D m n / N. BGC: 2 K D m n / N plus D n for the mean.
/// Standard layers ignore N. Throws ConfigError when N does not divide m and n.
CostBreakdown op_count(const LayerSpec& spec);

/// Standard: K m n. GC: K m n / N. BGC: 2 K m n / N.
std::uint64_t param_count(const LayerSpec& spec);

}  // namespace bgc
