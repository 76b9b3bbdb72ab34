#pragma once

#include <stdexcept>
#include <string>

namespace mfff {

/// Bad input: violated precondition, malformed measure, bad configuration.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical method did not deliver (non-convergence, blown tolerance).
/// `value` carries the last residual / offending quantity when meaningful.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, double value = 0.0)
      : std::runtime_error(what), value_(value) {}
  double value() const noexcept { return value_; }

 private:
  double value_;
};

}  // namespace mfff
