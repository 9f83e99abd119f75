// Copyright 2026 The dash-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dash {

// Operand shapes disagree with each other or with an AttnConfig.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite input, negative probability, or an argument outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A softmax row with no admissible entry (fully masked, or all-zero prior).
class DegenerateRowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index outside [0, limit).
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Malformed tensor / mask / trace file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backward pass invoked on a missing, stale, or inconsistent forward trace.
class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dash
