#pragma once

#include <stdexcept>
#include <string>

namespace lst {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for an op.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required (loss, gradients).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Components that do not fit together (taps vs. side config, checkpoint vs. model).
class WiringError : public Error {
 public:
  using Error::Error;
};

/// Bad user data, e.g. token ids outside the vocabulary.
class InputError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace lst
