#pragma once

#include <stdexcept>
#include <string>

namespace o2o {

// Base class for all library errors. The CLI maps these to exit code 1
// (user error); anything else escaping is treated as an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable input data.
class InputError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// An iterative solver failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration key or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace o2o
