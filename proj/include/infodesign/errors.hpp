#pragma once

#include <stdexcept>
#include <string>

namespace infodesign {

/// Invalid configuration (bad dimensions, unknown keys, out-of-range settings).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arguments that violate an operation's preconditions.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Overflow, non-finite values, failed factorizations.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The model cannot provide what was asked of it (e.g. no design Jacobian).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// All resampling weights vanished or were non-finite.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace infodesign
