// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvmae/rng.hpp"

namespace mvmae::geo {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const Vec3 d = a - b;
  return dot(d, d);
}
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

struct PointCloud {
  std::vector<Vec3> points;
  std::optional<int> label;
  std::string source_id;

  std::size_t size() const { return points.size(); }
};

/// Centroid to the origin, then scale so the farthest point has norm 1.
/// A cloud of identical points maps to all zeros.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

/// Greedy max-min subset starting from `start_index`; ties go to the lowest
/// index and already-selected points are never re-picked.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points,
                                                 std::size_t n_samples,
                                                 std::size_t start_index = 0);

/// Row i holds the k nearest point indices to centers[i], ascending by
/// distance, ties by lowest index. Result is centers.size() x k, row-major.
std::vector<std::size_t> knn(std::span<const Vec3> points, std::span<const Vec3> centers,
                             std::size_t k);

struct AugmentConfig {
  double scale_min = 0.8;
  double scale_max = 1.2;
};

/// Uniform scale in [scale_min, scale_max] followed by a uniform rotation about +z.
PointCloud augment(const PointCloud& cloud, Rng& rng, const AugmentConfig& config = {});
PointCloud scale_and_rotate_z(const PointCloud& cloud, double scale, double angle_rad);

// Point-cloud files.
PointCloud read_xyz(const std::filesystem::path& path);
/// OFF mesh vertices; faces are ignored.
PointCloud read_off(const std::filesystem::path& path);
/// Dispatches on extension (.off, otherwise XYZ).
PointCloud read_cloud(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, std::span<const Vec3> points);

}  // namespace mvmae::geo
