#include "bgc/sampling.hpp"

#include <cmath>
#include <random>

namespace bgc {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kStreamSalt = 0xd1b54a32d192ed03ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(SeedSpec spec)
    : key_(mix64(spec.seed ^ mix64(spec.stream * kStreamSalt + kGoldenGamma))) {}

CounterRng::result_type CounterRng::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGoldenGamma);
}

double init_variance(std::size_t out_channels, std::size_t in_channels,
                     std::size_t kernel_size, WeightInit init) {
  const double fan_in = static_cast<double>(kernel_size * in_channels);
  const double fan_out = static_cast<double>(kernel_size * out_channels);
  return init == WeightInit::He ? 2.0 / fan_in : 2.0 / (fan_in + fan_out);
}

MultiChannelSignal sample_input(SignalShape shape, InputDistribution dist,
                                SeedSpec seed) {
  MultiChannelSignal x(shape);
  CounterRng rng(seed);
  auto& v = x.values();
  if (dist == InputDistribution::Normal01) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = normal(rng);
  } else {
    // generate_canonical can return exactly 0, which maps to -1; redraw.
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      double u = uniform(rng);
      while (u <= -1.0) u = uniform(rng);
      v.data()[i] = u;
    }
  }
  return x;
}

StandardConv init_standard_conv(std::size_t out_channels,
                                std::size_t in_channels,
                                std::size_t kernel_size, WeightInit init,
                                SeedSpec seed) {
  StandardConv w(out_channels, in_channels, kernel_size);
  CounterRng rng(seed);
  std::normal_distribution<double> normal(
      0.0, std::sqrt(init_variance(out_channels, in_channels, kernel_size, init)));
  for (double& t : w.taps()) t = normal(rng);
  return w;
}

}  // namespace bgc
