// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvmae/config.hpp"
#include "mvmae/tensor.hpp"

namespace mvmae::gc {

inline constexpr double kStep = 1e-5;       // central-difference step (five-point stencil)
inline constexpr double kTolerance = 1e-5;  // max relative error
/// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor):
/// below it the comparison is effectively absolute, where central differences
/// are dominated by f64 cancellation noise of about 1e-11.
inline constexpr double kRelativeFloor = 1e-4;

double relative_error(double analytic, double numeric, double floor = kRelativeFloor);

struct CheckResult {
  std::string name;  // op name or parameter name
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed(double tol = kTolerance) const { return max_rel_error < tol; }
};

/// Compares backward() against central differences of `loss` over every
/// element of every tensor in `inputs`. `loss` must rebuild its graph from the
/// current input values on each call.
std::vector<CheckResult> check_function(const std::function<ad::Tensor()>& loss,
                                        std::vector<ad::Tensor> inputs,
                                        const std::vector<std::string>& names, double h = kStep);

/// One check per differentiable operator on small random inputs, each reduced
/// to a scalar through a fixed random projection.
std::vector<CheckResult> check_ops(std::uint64_t seed);

struct ModelCheckReport {
  std::vector<CheckResult> params;  // one per trainable parameter
  std::size_t elements = 0;
  double loss = 0.0;
  const CheckResult& worst() const;
  bool passed(double tol = kTolerance) const;
};

/// End-to-end check of total_loss for one fixed pretraining sample against
/// every trainable parameter element.
ModelCheckReport check_model(const ModelConfig& config, std::uint64_t seed, double h = kStep);

}  // namespace mvmae::gc
