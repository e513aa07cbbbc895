#pragma once

#include <stdexcept>
#include <string>

namespace mux {

/// Bad configuration: unknown keys, invalid values, inconsistent model lists.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File-level failures: missing paths, bad magic, checksum or version mismatch.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric failures: non-finite values, degenerate norms, diverged training.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mux
