#pragma once

#include <stdexcept>
#include <string>

namespace locsens {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value or argument violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed (bad magic, version, counts, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace locsens
