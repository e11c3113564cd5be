#pragma once

#include <stdexcept>
#include <string>

namespace tdattr {

/// Bad argument shape or non-finite data.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (t < tau, epsilon <= 0, ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A profile, nonlinearity or config failed one of its checks.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// The time integrator lost control of a trajectory.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& what, double time)
    : std::runtime_error(what + " (t = " + std::to_string(time) + ")"), message_(what), time_(time) {}

  double time() const noexcept { return time_; }
  const std::string& message() const noexcept { return message_; }

private:
  std::string message_;
  double time_;
};

} // namespace tdattr
