#pragma once

#include <stdexcept>
#include <string>

namespace readout {

/// Model construction or validation failed (bad dimensions, non-stochastic
/// columns, negative entries). The message names the offending index.
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// An exact computation would exceed the configured work cap.
class WorkCapExceeded : public std::runtime_error {
 public:
  explicit WorkCapExceeded(const std::string& what) : std::runtime_error(what) {}
};

/// An observation sequence has zero probability under the model; callers
/// enumerating sequences should prune such branches by weight instead of
/// asking for an estimate.
class ImpossibleObservation : public std::runtime_error {
 public:
  explicit ImpossibleObservation(const std::string& what)
      : std::runtime_error(what) {}
};

/// Numeric routine failed to converge.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace readout
