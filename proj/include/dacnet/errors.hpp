#pragma once

#include <stdexcept>
#include <string>

namespace dacnet {

// Error families map onto the CLI exit codes: config 2, data 3, numeric 4.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer shapes that do not fit together.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dacnet
