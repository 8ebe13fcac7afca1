// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvmae/config.hpp"
#include "mvmae/geometry.hpp"

namespace mvmae::data {

/// Analytic surface to sample. Dimensions by kind:
///   sphere: a = radius           cube: a = side
///   torus: a = major, b = minor  cylinder / cone: a = radius, b = height
struct SyntheticShape {
  std::string kind = "sphere";
  double a = 1.0;
  double b = 1.0;
  std::size_t n_points = 1024;
  std::uint64_t seed = 0;
  bool random_orientation = false;
};

const std::vector<std::string>& known_kinds();

/// Uniform surface samples, optionally rotated uniformly in SO(3), then
/// normalized to the unit sphere. Centrally symmetric kinds are sampled in
/// antipodal pairs so their centroid is exactly the origin for even counts.
geo::PointCloud generate_shape(const SyntheticShape& spec);

/// `instances_per_class` clouds per configured class with randomized
/// dimensions; labels follow the class order in `data.classes`.
std::vector<geo::PointCloud> make_dataset(const DataConfig& data, std::size_t n_points);

}  // namespace mvmae::data
