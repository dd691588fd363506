#pragma once

#include <stdexcept>
#include <string>

namespace pnp {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched or unsupported image/kernel dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Bad argument values (fractions out of range, non-binary masks, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when an iterative procedure blows up (NaN loss, rising energy).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace pnp
