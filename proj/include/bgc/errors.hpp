#pragma once

#include <stdexcept>
#include <string>

namespace bgc {

/// Invalid experiment or operator configuration (e.g. a group count that does
/// not divide the channel counts).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure produced an unusable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bgc
