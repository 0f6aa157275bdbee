#pragma once

#include <stdexcept>
#include <string>

namespace mtmask {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the CLI reports for it.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 3; }
};

/// Bad user input at the command-line level.
class UsageError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed, missing, or inconsistent data (files, shapes, empty sets).
class DataError : public Error {
public:
  using Error::Error;
};

/// Raster file envelope violations.
class FormatError : public DataError {
public:
  using DataError::DataError;
};

/// Non-finite values or degenerate numerical inputs.
class NumericError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace mtmask
