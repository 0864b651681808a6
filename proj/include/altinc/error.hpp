#pragma once

#include <stdexcept>
#include <string>

namespace altinc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value violates an operation's precondition (range, normalization, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed: bad magic, truncation, hash mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Unknown or malformed configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was invoked before the stage it depends on.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace altinc
