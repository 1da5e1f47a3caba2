#pragma once

#include <stdexcept>
#include <string>

namespace ndo {

/// Inconsistent sizes or out-of-range arguments.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested object would not fit the dense/enumerated representation.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Non-finite values appeared during integration or training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, long step)
      : NumericalError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Iteration budget exhausted before reaching the residual tolerance.
class TimeoutError : public std::runtime_error {
 public:
  TimeoutError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// Markov chain rejected every proposal for too long.
class StuckChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ndo
