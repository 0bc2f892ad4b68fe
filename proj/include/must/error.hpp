#pragma once

#include <stdexcept>
#include <string>

namespace must {

// Violated precondition of a public operation (wrong shapes, bad arguments).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor extents that do not line up for the requested operation.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Index outside the valid range of a sequence.
class BoundsError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// Malformed or missing input data: annotations, frame stores, embedding stores.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// NaN/Inf encountered where finite values are required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace must
