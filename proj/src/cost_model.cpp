#include "bgc/cost_model.hpp"

#include <string>

#include "bgc/errors.hpp"

namespace bgc {

namespace {

void validate(const LayerSpec& s) {
  if (s.m == 0 || s.n == 0 || s.K == 0 || s.D == 0 || s.N == 0) {
    throw ConfigError("layer dimensions must be positive");
  }
  if (s.variant != LayerVariant::Standard && (s.m % s.N != 0 || s.n % s.N != 0)) {
    throw ConfigError("N=" + std::to_string(s.N) + " must divide m=" +
                      std::to_string(s.m) + " and n=" + std::to_string(s.n));
  }
}

// Taps per layer, per (1 x 1)-sized output position.
std::uint64_t taps(const LayerSpec& s) {
  switch (s.variant) {
    case LayerVariant::Standard:
      return s.K * s.m * s.n;
    case LayerVariant::GC:
      return s.K * (s.m / s.N) * (s.n / s.N) * s.N;
    case LayerVariant::BGC:
      return 2 * s.K * (s.m / s.N) * (s.n / s.N) * s.N;
  }
  return 0;
}

}  // namespace

CostBreakdown op_count(const LayerSpec& spec) {
  validate(spec);
  CostBreakdown c;
  c.conv_ops = taps(spec) * spec.D;
  c.mean_ops = spec.variant == LayerVariant::BGC ? spec.D * spec.n : 0;
  c.total_ops = c.conv_ops + c.mean_ops;
  c.param_count = taps(spec);
  return c;
}

std::uint64_t param_count(const LayerSpec& spec) {
  validate(spec);
  return taps(spec);
}

}  // namespace bgc
