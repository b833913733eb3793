#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace depthbnn {

/// Invalid distribution or model parameters (non-positive scale, bad quantiles, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A caller broke a documented precondition (e.g. forward past the instantiated depth).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The depth posterior support grew past the configured cap.
class RunawayDepth : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A gradient entry was NaN or infinite; the optimizer step was rejected.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::size_t index)
      : std::runtime_error("non-finite gradient at parameter " + std::to_string(index)),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace depthbnn
