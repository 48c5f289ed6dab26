#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lawpal {

/// Input violates a documented precondition (negative count, probability outside [0,1], ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Configuration or data failed validation. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure during a run. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t step = -1)
      : std::runtime_error(what), step_(step) {}
  /// 1-based time step at which the failure occurred, or -1 if not step-specific.
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

/// Every particle weight was zero at some step.
class DegeneracyError : public NumericalError {
 public:
  explicit DegeneracyError(std::ptrdiff_t step)
      : NumericalError("particle filter degenerated: all weights are zero at t=" +
                           std::to_string(step),
                       step) {}
};

}  // namespace lawpal
