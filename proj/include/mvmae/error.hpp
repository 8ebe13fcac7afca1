// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mvmae {

/// Raised when a caller violates an operation's documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration (bad sizes, missing files, unknown keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(const std::string& what, long long step)
      : std::runtime_error(what), step_(step) {}
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

/// Malformed checkpoint; carries the byte offset where decoding failed.
class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

#define MVMAE_EXPECT(cond, msg)                  \
  do {                                           \
    if (!(cond)) throw ::mvmae::ContractViolation(msg); \
  } while (0)

}  // namespace mvmae
