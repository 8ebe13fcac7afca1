// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mvmae/error.hpp"

namespace mvmae::tok {

using geo::operator-;

PatchSet build_patches(const geo::PointCloud& cloud, std::size_t n, std::size_t k) {
  PatchSet ps;
  ps.n = n;
  ps.k = k;
  ps.center_index = geo::farthest_point_sampling(cloud.points, n, 0);
  ps.centers.reserve(n);
  for (std::size_t i : ps.center_index) ps.centers.push_back(cloud.points[i]);
  ps.member_index = geo::knn(cloud.points, ps.centers, k);
  ps.patches.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      ps.patches.push_back(cloud.points[ps.member_index[i * k + j]] - ps.centers[i]);
  return ps;
}

std::size_t masked_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

MaskPlan apply_mask(std::size_t n, double ratio, Rng& rng) {
  MVMAE_EXPECT(ratio > 0.0 && ratio < 1.0, "apply_mask: ratio must lie in (0, 1)");
  const std::size_t count = masked_count(n, ratio);
  MVMAE_EXPECT(count > 0 && count < n, "apply_mask: ratio " + std::to_string(ratio) + " on " +
                                           std::to_string(n) +
                                           " patches leaves an empty visible or masked set");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  MaskPlan plan;
  plan.ratio = ratio;
  plan.masked.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
  plan.visible.assign(perm.begin() + static_cast<std::ptrdiff_t>(count), perm.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  return plan;
}

ad::Tensor points_tensor(std::span<const Vec3> points) {
  std::vector<double> v;
  v.reserve(points.size() * 3);
  for (const Vec3& p : points) v.insert(v.end(), p.begin(), p.end());
  return ad::Tensor::from({points.size(), 3}, std::move(v));
}

ad::Tensor patch_points(const PatchSet& patches, std::span<const std::size_t> idx) {
  std::vector<double> v;
  v.reserve(idx.size() * patches.k * 3);
  for (std::size_t i : idx) {
    MVMAE_EXPECT(i < patches.n, "patch_points: patch index out of range");
    for (const Vec3& p : patches.patch(i)) v.insert(v.end(), p.begin(), p.end());
  }
  return ad::Tensor::from({idx.size() * patches.k, 3}, std::move(v));
}

ad::Tensor center_points(const PatchSet& patches, std::span<const std::size_t> idx) {
  std::vector<double> v;
  v.reserve(idx.size() * 3);
  for (std::size_t i : idx) {
    MVMAE_EXPECT(i < patches.n, "center_points: patch index out of range");
    v.insert(v.end(), patches.centers[i].begin(), patches.centers[i].end());
  }
  return ad::Tensor::from({idx.size(), 3}, std::move(v));
}

PatchEmbedding::PatchEmbedding(nn::ParameterStore& store, const std::string& name,
                               std::size_t width, Rng& rng)
    : mlp_(store, name + ".mlp", 3, width / 2, width, rng) {
  MVMAE_EXPECT(width >= 2, "PatchEmbedding: width too small");
}

ad::Tensor PatchEmbedding::operator()(const ad::Tensor& points, std::size_t k) const {
  MVMAE_EXPECT(points.rank() == 2 && points.dim(1) == 3 && k > 0 && points.dim(0) % k == 0,
               "PatchEmbedding: expected [patches*k, 3] input");
  const std::size_t count = points.dim(0) / k;
  ad::Groups groups(count);
  for (std::size_t i = 0; i < count; ++i) {
    groups[i].resize(k);
    std::iota(groups[i].begin(), groups[i].end(), i * k);
  }
  return ad::group_max(mlp_(points), groups);
}

PositionEmbedding3d::PositionEmbedding3d(nn::ParameterStore& store, const std::string& name,
                                         std::size_t width, Rng& rng)
    : mlp_(store, name + ".mlp", 3, width, width, rng) {}

}  // namespace mvmae::tok
