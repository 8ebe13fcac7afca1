// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvmae/tensor.hpp"

// Differentiable operators. Unless noted, matrices are rank-2 row-major and
// elementwise ops require identical shapes (no implicit broadcasting).
namespace mvmae::ad {

using Index = std::vector<std::size_t>;
using Groups = std::vector<Index>;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a[m,n] + bias[n] on every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenate rank-2 tensors along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Contiguous range [start, start+len) along axis 0 or 1 of a rank-2 tensor.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);

/// out[i] = a[idx[i]] (row gather; duplicates allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx);
/// out has `rows` rows, zero except out[idx[i]] += a[i].
Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> idx, std::size_t rows);

Tensor softmax_rows(const Tensor& a);
/// Per-row normalization to zero mean / unit variance, no affine.
Tensor layer_norm(const Tensor& a, double eps);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps);
/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column-wise max over each row group; ties resolve to the first listed row.
Tensor group_max(const Tensor& a, const Groups& groups);
Tensor group_mean(const Tensor& a, const Groups& groups);
/// mean((a - b)^2) over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace mvmae::ad
