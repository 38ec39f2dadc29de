#pragma once

#include <stdexcept>
#include <string>

namespace unigan {

// Base for every error the library raises. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: shapes, configuration values, file contents.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A file could not be read or parsed.
class LoadError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// NaN/Inf in a loss or an ill-conditioned metric input.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace unigan
