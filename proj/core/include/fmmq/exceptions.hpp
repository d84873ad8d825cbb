#pragma once

#include <stdexcept>
#include <string>

namespace fmmq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (p outside (0,1), ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Inconsistent model/solver configuration: malformed knots, shape mismatch.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Bad user data: non-finite values, missing cells, empty samples.
class InputError : public Error {
public:
  using Error::Error;
};

/// Optimization did not reach its tolerance contract.
class SolverError : public Error {
public:
  using Error::Error;
};

/// Iterative numerics diverged or produced NaN.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// File system or network failure.
class IoError : public Error {
public:
  explicit IoError(const std::string& what, bool retriable = false)
      : Error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

private:
  bool retriable_;
};

}  // namespace fmmq
