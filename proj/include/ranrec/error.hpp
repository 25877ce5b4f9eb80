#pragma once

#include <stdexcept>
#include <string>

namespace ranrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or file schema. The CLI maps
/// this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown (non-finite loss, degenerate data, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ranrec
