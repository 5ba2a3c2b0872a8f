// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dos {

/// Caller broke a documented precondition (shape mismatch, bad argument).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or infinity showed up where only finite values are allowed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent on-disk data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A checkpoint was produced under a structurally different configuration.
class ConfigMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class CorruptCheckpoint : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Metric has no defined value for the given input (e.g. AUC on one class).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace dos
