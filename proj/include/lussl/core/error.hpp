#pragma once

#include <stdexcept>
#include <string>

namespace lussl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating input data (manifests, images, labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)), reason_(what) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

/// Tensor or architecture shape disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint container could not be read (checksum, version, truncation).
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or degenerate statistics encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lussl
