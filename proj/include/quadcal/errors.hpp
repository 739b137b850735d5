#pragma once

#include <stdexcept>

namespace quadcal {

/// A numerical procedure could not meet its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model evaluation failed (crash, timeout, non-finite output).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Acceptance-rejection sampling stalled on a degenerate surrogate.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace quadcal
