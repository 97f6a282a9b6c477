#pragma once

#include <stdexcept>
#include <string>

namespace toptune {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or violated data invariant (detected before any computation).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk content: bad magic, unsupported version, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Factorization failure or non-finite intermediate inside a solver.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace toptune
