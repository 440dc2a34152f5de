#ifndef NESTOR_ERROR_H_
#define NESTOR_ERROR_H_

#include <stdexcept>
#include <string>

namespace nestor {

// Base class for every error raised by the library. The CLI maps each
// subclass onto a stable exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A convolution was asked to consume a sequence shorter than its kernel.
// The proposer catches this to truncate the pyramid.
class LevelTooShortError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

// Invalid or unknown configuration; carries the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint and data disagree (label sets, vocabularies, versions).
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or another numeric failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Internal invariant violated. Always a bug.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace nestor

#endif  // NESTOR_ERROR_H_
