// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvmae/geometry.hpp"
#include "mvmae/optim.hpp"
#include "mvmae/projection.hpp"

namespace mvmae {

inline constexpr int kConfigVersion = 1;

struct ModelConfig {
  std::size_t width = 64;  // token channels C
  std::size_t enc_depth = 4;
  std::size_t dec_depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t n_points = 1024;
  std::size_t n_patches = 64;
  std::size_t group_size = 32;
  double mask_ratio = 0.75;
  std::size_t pose_pool = 12;  // V
  std::size_t views = 3;       // K
  proj::GridSizes grid{64, 64, 8, 8};
  double elevation_deg = 30.0;
  double radius = 2.2;
  double fov_deg = 50.0;

  void validate() const;  // throws ConfigError
  std::size_t masked_patches() const;
  std::size_t sequence_length() const { return n_patches + views * grid.tokens(); }
};

struct TrainConfig {
  double lr = 1e-3;
  double lr_min = 1e-5;
  std::uint64_t warmup_steps = 0;
  optim::AdamWHyper adamw{};
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::size_t checkpoint_interval = 0;  // steps; 0 = final checkpoint only
  bool augment = true;
  geo::AugmentConfig augmentation{};
};

struct DataConfig {
  std::vector<std::string> classes{"sphere", "cube", "torus", "cylinder", "cone"};
  std::size_t instances_per_class = 200;
  std::uint64_t seed = 7;
  bool random_orientation = true;
};

struct ProbeConfig {
  double lr = 0.5;
  std::size_t iterations = 300;
  double weight_decay = 1e-3;
  double train_fraction = 0.5;
  std::size_t trials = 10;
  std::size_t queries = 20;
};

struct Config {
  int version = kConfigVersion;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  ProbeConfig probe;

  void validate() const;
};

/// Small desk-scale run (the default).
Config desk_config();
/// Full-scale settings of the published pretraining recipe.
Config paper_config();
/// Minimal network used for finite-difference gradient checks.
Config tiny_config();

nlohmann::json to_json(const Config& config);
/// Strict: unknown keys and version mismatches throw ConfigError. Missing keys
/// keep their desk defaults.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const Config& config);
/// FNV-1a over the canonical JSON dump, hex encoded.
std::string config_hash(const Config& config);

}  // namespace mvmae
