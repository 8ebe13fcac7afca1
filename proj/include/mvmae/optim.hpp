// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mvmae/nn.hpp"

namespace mvmae::optim {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct OptimState {
  AdamWHyper hyper;
  std::uint64_t step = 0;
  // Moments per parameter, in ParameterStore order; non-trainable entries stay empty.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

OptimState make_state(const std::vector<nn::Parameter>& params, const AdamWHyper& hyper);

/// One AdamW update from the parameters' current grad buffers. Weight decay is
/// decoupled and applied first: p <- p - lr*wd*p, then the bias-corrected Adam step.
void adamw_step(std::vector<nn::Parameter>& params, OptimState& state, double lr);

/// Linear warmup 0 -> lr0 over `warmup_steps`, then cosine decay to lr_min at total_steps.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0, double lr_min,
                 std::uint64_t warmup_steps = 0);

}  // namespace mvmae::optim
