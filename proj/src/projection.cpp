// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "mvmae/error.hpp"

namespace mvmae::proj {

using geo::operator-;
using geo::operator*;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct CameraFrame {
  Vec3 eye;
  Vec3 right;
  Vec3 up;
  Vec3 forward;
  double focal_px;
};

CameraFrame frame_for(const CameraPose& pose, std::size_t height) {
  CameraFrame f;
  f.eye = pose.position();
  f.forward = geo::normalized(-1.0 * f.eye);
  f.right = geo::normalized(geo::cross(f.forward, Vec3{0.0, 0.0, 1.0}));
  f.up = geo::cross(f.right, f.forward);
  f.focal_px = 0.5 * static_cast<double>(height) / std::tan(0.5 * pose.fov_deg * kDeg);
  return f;
}

// Floor to a pixel index; coordinates within 1e-9 px of an integer snap to it so
// rounding residue on the optical axis cannot move a point across a pixel edge.
std::int64_t pixel_floor(double x) {
  const double r = std::round(x);
  return static_cast<std::int64_t>(std::abs(x - r) < 1e-9 ? r : std::floor(x));
}

Projection project_with(const Vec3& p, const CameraFrame& f, const CameraPose& pose,
                        std::size_t height, std::size_t width) {
  Projection out;
  const Vec3 d = p - f.eye;
  out.depth = geo::dot(d, f.forward);
  const double near = pose.radius - kDepthMargin;
  const double far = pose.radius + kDepthMargin;
  if (out.depth <= 0.0) return out;  // behind the camera: no image coordinates
  out.u = 0.5 * static_cast<double>(width) + f.focal_px * geo::dot(d, f.right) / out.depth;
  out.v = 0.5 * static_cast<double>(height) - f.focal_px * geo::dot(d, f.up) / out.depth;
  out.col = pixel_floor(out.u);
  out.row = pixel_floor(out.v);
  out.in_frustum = out.row >= 0 && out.row < static_cast<std::int64_t>(height) && out.col >= 0 &&
                   out.col < static_cast<std::int64_t>(width) && out.depth > near &&
                   out.depth < far;
  return out;
}

}  // namespace

void CameraPose::validate() const {
  if (!(radius > 1.0)) throw ConfigError("camera radius must exceed 1 (outside the unit sphere)");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("camera fov must lie in (0, 180)");
  if (!(std::abs(elevation_deg) < 90.0)) throw ConfigError("camera elevation must lie in (-90, 90)");
}

Vec3 CameraPose::position() const {
  const double az = azimuth_deg * kDeg, el = elevation_deg * kDeg;
  return {radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
          radius * std::sin(el)};
}

std::array<double, 5> CameraPose::feature() const {
  const double az = azimuth_deg * kDeg, el = elevation_deg * kDeg;
  return {std::sin(az), std::cos(az), std::sin(el), std::cos(el), radius};
}

PosePool make_pose_pool(std::size_t count, double elevation_deg, double radius, double fov_deg) {
  MVMAE_EXPECT(count >= 1, "make_pose_pool: pool size must be >= 1");
  PosePool pool;
  for (std::size_t i = 0; i < count; ++i) {
    CameraPose pose{360.0 * static_cast<double>(i) / static_cast<double>(count), elevation_deg,
                    radius, fov_deg};
    pose.validate();
    pool.poses.push_back(pose);
  }
  return pool;
}

void GridSizes::validate() const {
  if (image_h == 0 || image_w == 0 || token_h == 0 || token_w == 0)
    throw ConfigError("image and token grid extents must be positive");
  if (image_h % token_h != 0 || image_w % token_w != 0)
    throw ConfigError("image size " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                      " is not divisible by token grid " + std::to_string(token_h) + "x" +
                      std::to_string(token_w));
}

Projection project_point(const Vec3& p, const CameraPose& pose, std::size_t height,
                         std::size_t width) {
  return project_with(p, frame_for(pose, height), pose, height, width);
}

std::vector<Projection> project_points(std::span<const Vec3> points, const CameraPose& pose,
                                       std::size_t height, std::size_t width) {
  const CameraFrame f = frame_for(pose, height);
  std::vector<Projection> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(project_with(p, f, pose, height, width));
  return out;
}

DepthMap rasterize_depth(std::span<const Vec3> points, const CameraPose& pose, std::size_t height,
                         std::size_t width) {
  DepthMap map;
  map.height = height;
  map.width = width;
  map.pose = pose;
  map.near = pose.radius - kDepthMargin;
  map.far = pose.radius + kDepthMargin;
  map.values.assign(height * width, 0.0);
  std::vector<double> zbuf(height * width, map.far);
  const CameraFrame f = frame_for(pose, height);
  for (const Vec3& p : points) {
    const Projection pr = project_with(p, f, pose, height, width);
    if (!pr.in_frustum) continue;
    const std::size_t pix = static_cast<std::size_t>(pr.row) * width + static_cast<std::size_t>(pr.col);
    if (pr.depth < zbuf[pix]) {
      zbuf[pix] = pr.depth;
      map.values[pix] = std::clamp((map.far - pr.depth) / (map.far - map.near), 0.0, 1.0);
    }
  }
  return map;
}

std::size_t token_index(std::size_t row, std::size_t col, const GridSizes& sizes) {
  sizes.validate();
  MVMAE_EXPECT(row < sizes.image_h && col < sizes.image_w, "token_index: pixel outside the image");
  return (row / sizes.patch_h()) * sizes.token_w + col / sizes.patch_w();
}

TokenGrouping group_by_image_token(std::span<const Vec3> visible_centers, const CameraPose& pose,
                                   const GridSizes& sizes) {
  sizes.validate();
  const auto projected = project_points(visible_centers, pose, sizes.image_h, sizes.image_w);
  std::map<std::size_t, std::vector<std::size_t>> by_token;
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const Projection& pr = projected[i];
    if (!pr.in_frustum) continue;
    by_token[token_index(static_cast<std::size_t>(pr.row), static_cast<std::size_t>(pr.col), sizes)]
        .push_back(i);
  }
  TokenGrouping g;
  for (auto& [token, members] : by_token) {
    g.token.push_back(token);
    g.members.push_back(std::move(members));
  }
  return g;
}

void write_pgm16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                 std::span<const double> values) {
  MVMAE_EXPECT(values.size() == height * width, "write_pgm16: value count does not match size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  std::vector<char> bytes(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = std::clamp(values[i], 0.0, 1.0);
    const auto s = static_cast<std::uint16_t>(std::lround(d * 65535.0));
    bytes[2 * i] = static_cast<char>(s >> 8);
    bytes[2 * i + 1] = static_cast<char>(s & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm16(const std::filesystem::path& path, const DepthMap& map) {
  write_pgm16(path, map.height, map.width, map.values);
}

Pgm16 read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  Pgm16 img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 65535) throw ConfigError(path.string() + ": not a 16-bit P5 PGM");
  in.get();
  std::vector<unsigned char> bytes(img.width * img.height * 2);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw ConfigError(path.string() + ": truncated PGM data");
  img.samples.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i)
    img.samples[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  return img;
}

}  // namespace mvmae::proj
