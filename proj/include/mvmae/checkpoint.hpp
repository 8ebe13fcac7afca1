// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvmae/config.hpp"
#include "mvmae/model.hpp"
#include "mvmae/optim.hpp"

namespace mvmae::ckpt {

inline constexpr char kMagic[6] = {'M', 'V', 'M', 'A', 'E', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

/// Binary layout (little-endian):
///   magic "MVMAE\0" | u32 version | u32 len, config JSON
///   | u32 count, per parameter: u32 len, name, u8 dtype, u32 rank, u64 dims[rank], f64 data
///   | u64 optimizer step, per parameter: u8 present, f64 m[], f64 v[]
///   | u64 training step | u32 len, rng state text
struct Checkpoint {
  Config config;
  std::vector<NamedArray> params;
  optim::OptimState optim;
  std::uint64_t step = 0;
  std::string rng_state;
};

Checkpoint capture(const Config& config, const model::MultiviewMae& model,
                   const optim::OptimState& optim, std::uint64_t step, const Rng& rng);

/// Copies parameter values into `model`; names and shapes must match exactly.
void restore_parameters(const Checkpoint& ckpt, model::MultiviewMae& model);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Throws CheckpointError (with byte offset) on any malformed input.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over every parameter's name and raw bits.
std::uint64_t parameter_hash(const nn::ParameterStore& store);

}  // namespace mvmae::ckpt
