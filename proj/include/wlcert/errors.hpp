#pragma once

#include <stdexcept>
#include <string>

namespace wlcert {

/// Invalid input or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Quadrature non-convergence, divergent integrand, or trajectory explosion.
/// Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double partial = 0.0, double residual = 0.0)
      : std::runtime_error(what), partial_(partial), residual_(residual) {}

  double partial() const noexcept { return partial_; }
  double residual() const noexcept { return residual_; }

 private:
  double partial_;
  double residual_;
};

/// A switch was required but none is admissible. Maps to CLI exit code 4.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, double margin)
      : std::runtime_error(what), margin_(margin) {}

  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

}  // namespace wlcert
