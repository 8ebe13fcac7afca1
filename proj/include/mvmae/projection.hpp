// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mvmae/geometry.hpp"

namespace mvmae::proj {

using geo::Vec3;

/// Look-at camera on a sphere around the origin, +z up.
struct CameraPose {
  double azimuth_deg = 0.0;
  double elevation_deg = 30.0;
  double radius = 2.2;
  double fov_deg = 50.0;  // vertical

  void validate() const;
  Vec3 position() const;
  /// (sin az, cos az, sin el, cos el, radius), the pose-embedding input.
  std::array<double, 5> feature() const;
  bool operator==(const CameraPose&) const = default;
};

struct PosePool {
  std::vector<CameraPose> poses;
  std::size_t size() const { return poses.size(); }
};

/// V poses on a ring: azimuth 360*i/V, shared elevation/radius/fov.
PosePool make_pose_pool(std::size_t count, double elevation_deg = 30.0, double radius = 2.2,
                        double fov_deg = 50.0);

/// Depth-map and token-grid extents. Image extents must be multiples of the
/// token extents; tokens are indexed row-major.
struct GridSizes {
  std::size_t image_h = 224;
  std::size_t image_w = 224;
  std::size_t token_h = 14;
  std::size_t token_w = 14;

  void validate() const;  // throws ConfigError
  std::size_t patch_h() const { return image_h / token_h; }
  std::size_t patch_w() const { return image_w / token_w; }
  std::size_t tokens() const { return token_h * token_w; }
  std::size_t pixels_per_token() const { return patch_h() * patch_w(); }
};

/// Half-width of the depth slab around the origin; near/far = radius -/+ margin.
inline constexpr double kDepthMargin = 1.05;

struct Projection {
  double u = 0.0;  // continuous column
  double v = 0.0;  // continuous row
  std::int64_t row = 0;
  std::int64_t col = 0;
  double depth = 0.0;  // distance along the optical axis
  bool in_frustum = false;
};

Projection project_point(const Vec3& p, const CameraPose& pose, std::size_t height,
                         std::size_t width);
std::vector<Projection> project_points(std::span<const Vec3> points, const CameraPose& pose,
                                       std::size_t height, std::size_t width);

struct DepthMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, 0 = background, closer = larger
  CameraPose pose;
  double near = 0.0;
  double far = 0.0;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
};

/// Z-buffered single-pixel splat of every point; value (far - z)/(far - near).
DepthMap rasterize_depth(std::span<const Vec3> points, const CameraPose& pose, std::size_t height,
                         std::size_t width);

/// Image-token cell containing pixel (row, col): (row/patch_h)*token_w + col/patch_w.
std::size_t token_index(std::size_t row, std::size_t col, const GridSizes& sizes);

/// Visible patch indices grouped by the image token their center projects into.
/// Groups are ordered by ascending token index; out-of-frustum centers are dropped.
struct TokenGrouping {
  std::vector<std::size_t> token;                 // G token indices
  std::vector<std::vector<std::size_t>> members;  // G member lists (positions in the visible list)

  std::size_t size() const { return token.size(); }
};

TokenGrouping group_by_image_token(std::span<const Vec3> visible_centers, const CameraPose& pose,
                                   const GridSizes& sizes);

/// Binary 16-bit PGM (P5, maxval 65535, big-endian samples), value round(d * 65535).
void write_pgm16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                 std::span<const double> values);
void write_pgm16(const std::filesystem::path& path, const DepthMap& map);

struct Pgm16 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> samples;
};
Pgm16 read_pgm16(const std::filesystem::path& path);

}  // namespace mvmae::proj
