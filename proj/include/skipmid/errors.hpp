#pragma once

#include <stdexcept>
#include <string>

namespace skipmid {

// Invalid configuration (bad hyperparameters, malformed config file, unknown keys).
// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A runtime contract violation (shape mismatch, out-of-range index, degenerate
// input, non-finite values). The CLI maps this to exit code 2.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or mismatched binary artifact (checkpoint, token file).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace skipmid
