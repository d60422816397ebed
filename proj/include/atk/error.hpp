#pragma once

#include <stdexcept>
#include <string>

namespace atk {

// Base for all toolkit errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration, shapes, or argument values.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File format and filesystem failures.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Non-finite training loss or gradients.
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace atk
