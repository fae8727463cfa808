#pragma once

#include <stdexcept>
#include <string>

namespace resdiv {

// Base of every error raised by the toolkit. The CLI maps subclasses onto
// exit codes (see commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Enumeration of a discrete ensemble would exceed the supported table size.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A quantity is undefined for the given input (zero variance, zero total).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelationError : public UndefinedError {
 public:
  using UndefinedError::UndefinedError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// RSDC decoding errors.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace resdiv
