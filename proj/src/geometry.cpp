// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mvmae/error.hpp"

namespace mvmae::geo {

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) { return (1.0 / norm(a)) * a; }

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  MVMAE_EXPECT(!cloud.points.empty(), "normalize_unit_sphere: empty cloud");
  Vec3 c{0.0, 0.0, 0.0};
  for (const Vec3& p : cloud.points) c = c + p;
  c = (1.0 / static_cast<double>(cloud.size())) * c;

  PointCloud out = cloud;
  double max_norm = 0.0;
  for (Vec3& p : out.points) {
    p = p - c;
    max_norm = std::max(max_norm, norm(p));
  }
  if (max_norm > 0.0) {
    for (Vec3& p : out.points) p = (1.0 / max_norm) * p;
  } else {
    for (Vec3& p : out.points) p = {0.0, 0.0, 0.0};
  }
  return out;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points,
                                                 std::size_t n_samples, std::size_t start_index) {
  const std::size_t n = points.size();
  MVMAE_EXPECT(n_samples >= 1, "farthest_point_sampling: n_samples must be >= 1");
  MVMAE_EXPECT(n_samples <= n, "farthest_point_sampling: n_samples (" +
                                   std::to_string(n_samples) + ") exceeds point count (" +
                                   std::to_string(n) + ")");
  MVMAE_EXPECT(start_index < n, "farthest_point_sampling: start_index out of range");

  std::vector<std::size_t> selected{start_index};
  selected.reserve(n_samples);
  std::vector<char> taken(n, 0);
  taken[start_index] = 1;
  std::vector<double> min_d2(n);
  for (std::size_t i = 0; i < n; ++i) min_d2[i] = squared_distance(points[i], points[start_index]);

  while (selected.size() < n_samples) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_d2[i] > min_d2[best]) best = i;
    }
    selected.push_back(best);
    taken[best] = 1;
    for (std::size_t i = 0; i < n; ++i)
      min_d2[i] = std::min(min_d2[i], squared_distance(points[i], points[best]));
  }
  return selected;
}

std::vector<std::size_t> knn(std::span<const Vec3> points, std::span<const Vec3> centers,
                             std::size_t k) {
  const std::size_t n = points.size();
  MVMAE_EXPECT(k >= 1 && k <= n, "knn: k (" + std::to_string(k) + ") must lie in [1, " +
                                     std::to_string(n) + "]");
  std::vector<std::size_t> out;
  out.reserve(centers.size() * k);
  std::vector<double> d2(n);
  std::vector<std::size_t> order(n);
  for (const Vec3& c : centers) {
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
                      });
    out.insert(out.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

PointCloud scale_and_rotate_z(const PointCloud& cloud, double scale, double angle_rad) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  PointCloud out = cloud;
  for (Vec3& p : out.points) {
    const double x = scale * p[0], y = scale * p[1], z = scale * p[2];
    p = {c * x - s * y, s * x + c * y, z};
  }
  return out;
}

PointCloud augment(const PointCloud& cloud, Rng& rng, const AugmentConfig& config) {
  const double scale = rng.uniform(config.scale_min, config.scale_max);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return scale_and_rotate_z(cloud, scale, angle);
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open point cloud file: " + path.string());
  return in;
}

}  // namespace

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  PointCloud cloud;
  cloud.source_id = path.string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p[0] >> p[1] >> p[2])) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 'x y z'");
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud read_off(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  std::string header;
  in >> header;
  // Some exporters glue the counts onto the header ("OFF1024 2000 0").
  if (header.rfind("OFF", 0) != 0) throw ConfigError(path.string() + ": missing OFF header");
  std::size_t nv = 0, nf = 0, ne = 0;
  if (header.size() > 3) {
    nv = std::stoul(header.substr(3));
    in >> nf >> ne;
  } else {
    in >> nv >> nf >> ne;
  }
  if (!in) throw ConfigError(path.string() + ": malformed OFF counts");
  PointCloud cloud;
  cloud.source_id = path.string();
  cloud.points.resize(nv);
  for (Vec3& p : cloud.points) {
    if (!(in >> p[0] >> p[1] >> p[2])) throw ConfigError(path.string() + ": truncated vertex list");
  }
  return cloud;
}

PointCloud read_cloud(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".off" ? read_off(path) : read_xyz(path);
}

void write_xyz(const std::filesystem::path& path, std::span<const Vec3> points) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw ConfigError("cannot write " + path.string());
  for (const Vec3& p : points) std::fprintf(f, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
  std::fclose(f);
}

}  // namespace mvmae::geo
