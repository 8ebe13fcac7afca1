// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvmae/geometry.hpp"
#include "mvmae/nn.hpp"
#include "mvmae/rng.hpp"

namespace mvmae::tok {

using geo::Vec3;

/// FPS centers and their KNN neighbourhoods in center-relative coordinates.
struct PatchSet {
  std::size_t n = 0;  // patch count
  std::size_t k = 0;  // points per patch
  std::vector<Vec3> centers;             // n
  std::vector<Vec3> patches;             // n*k, row-major by patch
  std::vector<std::size_t> center_index; // cloud index of each center
  std::vector<std::size_t> member_index; // n*k cloud indices

  std::span<const Vec3> patch(std::size_t i) const { return {patches.data() + i * k, k}; }
};

struct MaskPlan {
  std::vector<std::size_t> visible;  // sorted
  std::vector<std::size_t> masked;   // sorted
  double ratio = 0.0;
};

PatchSet build_patches(const geo::PointCloud& cloud, std::size_t n, std::size_t k);

/// floor(ratio * n + 0.5)
std::size_t masked_count(std::size_t n, double ratio);

/// Uniform masking without replacement. Both sets must end up non-empty.
MaskPlan apply_mask(std::size_t n, double ratio, Rng& rng);

/// [idx.size()*k, 3] constant tensor of the selected patches' relative points.
ad::Tensor patch_points(const PatchSet& patches, std::span<const std::size_t> idx);
/// [idx.size(), 3] constant tensor of the selected centers.
ad::Tensor center_points(const PatchSet& patches, std::span<const std::size_t> idx);
ad::Tensor points_tensor(std::span<const Vec3> points);

/// Lightweight PointNet: shared per-point MLP 3 -> C/2 -> C, then max over
/// each patch's k points. Invariant to point order within a patch.
class PatchEmbedding {
 public:
  PatchEmbedding() = default;
  PatchEmbedding(nn::ParameterStore& store, const std::string& name, std::size_t width, Rng& rng);
  /// points: [n_patches*k, 3] -> [n_patches, C]
  ad::Tensor operator()(const ad::Tensor& points, std::size_t k) const;

 private:
  nn::Mlp mlp_;
};

/// Learnable 3D positional embedding: MLP 3 -> C -> C.
class PositionEmbedding3d {
 public:
  PositionEmbedding3d() = default;
  PositionEmbedding3d(nn::ParameterStore& store, const std::string& name, std::size_t width,
                      Rng& rng);
  ad::Tensor operator()(const ad::Tensor& coords) const { return mlp_(coords); }

 private:
  nn::Mlp mlp_;
};

}  // namespace mvmae::tok
