// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvmae/checkpoint.hpp"
#include "mvmae/config.hpp"
#include "mvmae/geometry.hpp"
#include "mvmae/model.hpp"

namespace mvmae::train {

struct PretrainOptions {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> resume;
  /// Stop after this many optimizer updates in this invocation (the schedule
  /// still spans the full configured run).
  std::optional<std::uint64_t> max_steps;
  bool quiet = true;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based update index
  double lr = 0.0;
  double loss_3d = 0.0;
  double loss_2d = 0.0;
  double total = 0.0;
};

struct PretrainResult {
  std::uint64_t steps_completed = 0;  // global step after the last update
  std::uint64_t total_steps = 0;
  std::vector<StepRecord> records;    // this invocation only
  std::filesystem::path final_checkpoint;
};

std::uint64_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size);

/// Model parameters are seeded from the run seed; see `model_seed`.
std::uint64_t model_seed(std::uint64_t run_seed);

/// The pretraining loop: per step, for each batch item augment -> forward ->
/// backward (gradients averaged over the batch), then one AdamW update at the
/// cosine-scheduled learning rate. Appends rows to `metrics.tsv` in out_dir and
/// writes `ckpt_step<N>.bin` every checkpoint_interval steps plus `final.bin`.
/// Throws TrainingAbort (with the step) on a non-finite loss.
PretrainResult pretrain(const Config& config, const std::vector<geo::PointCloud>& dataset,
                        const PretrainOptions& options);

std::string format_record(const StepRecord& r);
inline constexpr const char* kMetricsHeader = "step\tlr\tl3d\tl2d\ttotal";

/// Rebuild a model from a checkpoint's config and parameters.
model::MultiviewMae model_from_checkpoint(const ckpt::Checkpoint& ckpt);

}  // namespace mvmae::train
