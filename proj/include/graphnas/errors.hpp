#pragma once

#include <stdexcept>
#include <string>

namespace graphnas {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (JSON-lines records, config files, architecture files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Incompatible tensor shapes passed to an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or out-of-scope configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace graphnas
