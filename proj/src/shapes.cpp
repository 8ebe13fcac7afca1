// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvmae/error.hpp"

namespace mvmae::data {

namespace {

using geo::Vec3;
using geo::operator*;
constexpr double kPi = std::numbers::pi;

Vec3 sample_sphere(double radius, Rng& rng) {
  Vec3 v{0, 0, 0};
  double n = 0.0;
  while (n < 1e-12) {
    v = {rng.normal(), rng.normal(), rng.normal()};
    n = geo::norm(v);
  }
  return (radius / n) * v;
}

Vec3 sample_cube(double side, Rng& rng) {
  const double h = 0.5 * side;
  const auto face = rng.below(6);
  const double s = rng.uniform(-h, h), t = rng.uniform(-h, h);
  const double sign = face % 2 == 0 ? h : -h;
  switch (face / 2) {
    case 0: return {sign, s, t};
    case 1: return {s, sign, t};
    default: return {s, t, sign};
  }
}

Vec3 sample_torus(double major, double minor, Rng& rng) {
  // Rejection on the tube angle: the surface element scales with (R + r cos theta).
  double theta = 0.0;
  while (true) {
    theta = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform() * (major + minor) <= major + minor * std::cos(theta)) break;
  }
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double ring = major + minor * std::cos(theta);
  return {ring * std::cos(phi), ring * std::sin(phi), minor * std::sin(theta)};
}

Vec3 sample_disk(double radius, double z, Rng& rng) {
  const double r = radius * std::sqrt(rng.uniform());
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 sample_cylinder(double radius, double height, Rng& rng) {
  const double side = 2.0 * kPi * radius * height;
  const double caps = 2.0 * kPi * radius * radius;
  if (rng.uniform() * (side + caps) < side) {
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return {radius * std::cos(phi), radius * std::sin(phi), rng.uniform(-0.5 * height, 0.5 * height)};
  }
  return sample_disk(radius, rng.uniform() < 0.5 ? 0.5 * height : -0.5 * height, rng);
}

Vec3 sample_cone(double radius, double height, Rng& rng) {
  const double side = kPi * radius * std::hypot(radius, height);
  const double base = kPi * radius * radius;
  if (rng.uniform() * (side + base) < side) {
    const double s = std::sqrt(rng.uniform());  // fraction of the slant length from the apex
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    return {radius * s * std::cos(phi), radius * s * std::sin(phi), height * (1.0 - s)};
  }
  return sample_disk(radius, 0.0, rng);
}

// Uniform rotation from a random unit quaternion.
std::array<Vec3, 3> random_rotation(Rng& rng) {
  double q[4];
  double n = 0.0;
  while (n < 1e-12) {
    for (double& c : q) c = rng.normal();
    n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  }
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return {Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
          Vec3{2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
          Vec3{2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

}  // namespace

const std::vector<std::string>& known_kinds() {
  static const std::vector<std::string> kinds{"sphere", "cube", "torus", "cylinder", "cone"};
  return kinds;
}

geo::PointCloud generate_shape(const SyntheticShape& spec) {
  MVMAE_EXPECT(spec.n_points >= 8, "generate_shape: n_points must be >= 8");
  MVMAE_EXPECT(spec.a > 0.0 && spec.b > 0.0, "generate_shape: dimensions must be positive");
  const auto& kinds = known_kinds();
  MVMAE_EXPECT(std::find(kinds.begin(), kinds.end(), spec.kind) != kinds.end(),
               "generate_shape: unknown shape kind '" + spec.kind + "'");

  Rng rng(spec.seed);
  auto draw = [&]() -> Vec3 {
    if (spec.kind == "sphere") return sample_sphere(spec.a, rng);
    if (spec.kind == "cube") return sample_cube(spec.a, rng);
    if (spec.kind == "torus") return sample_torus(spec.a, spec.b, rng);
    if (spec.kind == "cylinder") return sample_cylinder(spec.a, spec.b, rng);
    return sample_cone(spec.a, spec.b, rng);
  };

  geo::PointCloud cloud;
  cloud.source_id = spec.kind + "#" + std::to_string(spec.seed);
  cloud.points.reserve(spec.n_points);
  if (spec.kind == "cone") {
    for (std::size_t i = 0; i < spec.n_points; ++i) cloud.points.push_back(draw());
  } else {
    while (cloud.points.size() + 1 < spec.n_points) {
      const Vec3 p = draw();
      cloud.points.push_back(p);
      cloud.points.push_back(-1.0 * p);
    }
    if (cloud.points.size() < spec.n_points) cloud.points.push_back(draw());
  }

  if (spec.random_orientation) {
    const auto rot = random_rotation(rng);
    for (Vec3& p : cloud.points) p = {geo::dot(rot[0], p), geo::dot(rot[1], p), geo::dot(rot[2], p)};
  }
  return geo::normalize_unit_sphere(cloud);
}

std::vector<geo::PointCloud> make_dataset(const DataConfig& data, std::size_t n_points) {
  std::vector<geo::PointCloud> out;
  out.reserve(data.classes.size() * data.instances_per_class);
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    for (std::size_t i = 0; i < data.instances_per_class; ++i) {
      const std::uint64_t seed = derive_seed(data.seed, c * data.instances_per_class + i, 0);
      Rng dims(mix_seed(seed, 0xd1));
      SyntheticShape s;
      s.kind = data.classes[c];
      s.n_points = n_points;
      s.seed = seed;
      s.random_orientation = data.random_orientation;
      if (s.kind == "torus") {
        s.a = 1.0;
        s.b = dims.uniform(0.2, 0.6);
      } else if (s.kind == "cylinder") {
        s.a = dims.uniform(0.4, 1.0);
        s.b = dims.uniform(1.0, 2.5);
      } else if (s.kind == "cone") {
        s.a = dims.uniform(0.5, 1.0);
        s.b = dims.uniform(0.8, 2.0);
      }
      geo::PointCloud cloud = generate_shape(s);
      cloud.label = static_cast<int>(c);
      out.push_back(std::move(cloud));
    }
  }
  return out;
}

}  // namespace mvmae::data
