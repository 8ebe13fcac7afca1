// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/optim.hpp"

#include <cmath>
#include <numbers>

#include "mvmae/error.hpp"

namespace mvmae::optim {

OptimState make_state(const std::vector<nn::Parameter>& params, const AdamWHyper& hyper) {
  OptimState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    const std::size_t n = p.trainable ? p.tensor.numel() : 0;
    s.m.emplace_back(n, 0.0);
    s.v.emplace_back(n, 0.0);
  }
  return s;
}

void adamw_step(std::vector<nn::Parameter>& params, OptimState& state, double lr) {
  MVMAE_EXPECT(lr >= 0.0, "adamw_step: negative learning rate");
  MVMAE_EXPECT(state.m.size() == params.size() && state.v.size() == params.size(),
               "adamw_step: optimizer state does not match parameter list");
  state.step += 1;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    auto value = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    MVMAE_EXPECT(m.size() == value.size() && v.size() == value.size(),
                 "adamw_step: moment shape mismatch for '" + p.name + "'");
    MVMAE_EXPECT(grad.size() == value.size(),
                 "adamw_step: missing gradient for '" + p.name + "'");
    for (std::size_t j = 0; j < value.size(); ++j) {
      value[j] -= lr * h.weight_decay * value[j];
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * grad[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      value[j] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0, double lr_min,
                 std::uint64_t warmup_steps) {
  MVMAE_EXPECT(total_steps > 0, "cosine_lr: total_steps must be positive");
  MVMAE_EXPECT(step <= total_steps, "cosine_lr: step beyond total_steps");
  MVMAE_EXPECT(warmup_steps < total_steps, "cosine_lr: warmup must be shorter than the run");
  if (step < warmup_steps) {
    return lr0 * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double t = static_cast<double>(step - warmup_steps);
  const double span = static_cast<double>(total_steps - warmup_steps);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * t / span));
}

}  // namespace mvmae::optim
