#pragma once

#include <stdexcept>
#include <string>

namespace emobench {

/// Invalid configuration, plan, or call arguments detected before any work starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally broken input file (as opposed to row-level problems, which are collected).
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A run directory holds state produced by a different plan.
class FingerprintMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace emobench
