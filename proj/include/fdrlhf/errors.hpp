#pragma once

#include <stdexcept>
#include <string>

namespace fdrlhf {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownDivergence : public Error {
 public:
  explicit UnknownDivergence(const std::string& name)
      : Error("unknown divergence '" + name + "'") {}
};

// Divergences whose f' is not invertible with 0 outside its domain.
class ExcludedDivergence : public Error {
 public:
  explicit ExcludedDivergence(const std::string& name)
      : Error("divergence '" + name +
              "' has no closed-form regularized optimum (f' not invertible)") {}
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (last residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class EmptyConfidenceSet : public Error {
 public:
  EmptyConfidenceSet() : Error("confidence set is empty") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdrlhf
