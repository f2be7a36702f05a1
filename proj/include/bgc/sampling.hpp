#pragma once

#include <cstdint>
#include <limits>

#include "bgc/conv.hpp"

namespace bgc {

enum class InputDistribution { Normal01, UniformSym1 };
enum class WeightInit { He, Glorot };

/// A (seed, stream) pair names one independent random stream. Experiments use
/// the trial or sample index as the stream id so any single draw can be
/// regenerated without replaying the others.
struct SeedSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Counter-based generator: output i of a stream is splitmix64 applied to
/// key + (i + 1) * golden_gamma, where key is derived from (seed, stream) by
/// two more splitmix64 finalizations. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(SeedSpec spec);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z);

/// Tap variance for the chosen init: He 2/(K n), Glorot 2/(K n + K m).
double init_variance(std::size_t out_channels, std::size_t in_channels,
                     std::size_t kernel_size, WeightInit init);

MultiChannelSignal sample_input(SignalShape shape, InputDistribution dist,
                                SeedSpec seed);

/// I.i.d. zero-mean Gaussian taps with variance init_variance(m, n, K, init).
StandardConv init_standard_conv(std::size_t out_channels,
                                std::size_t in_channels,
                                std::size_t kernel_size, WeightInit init,
                                SeedSpec seed);

}  // namespace bgc
