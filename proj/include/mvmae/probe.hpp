// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvmae/config.hpp"
#include "mvmae/geometry.hpp"
#include "mvmae/model.hpp"

namespace mvmae::probe {

/// Row-major feature matrix with one integer label per row.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<double> values;  // rows * dim
  std::vector<int> labels;
  std::size_t rows() const { return labels.size(); }
  const double* row(std::size_t i) const { return values.data() + i * dim; }
};

struct ProbeReport {
  std::string mode;  // "linear" or "fewshot"
  double accuracy = 0.0;  // linear: test accuracy; fewshot: mean over trials
  double accuracy_std = 0.0;
  std::vector<double> trial_accuracies;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], linear mode
  std::size_t n_way = 0;
  std::size_t m_shot = 0;
  std::size_t queries = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::vector<std::uint64_t> seeds;
};

nlohmann::json to_json(const ProbeReport& report);

/// Frozen-encoder descriptors for every cloud; clouds must carry labels.
FeatureSet extract_features(const model::MultiviewMae& model,
                            const std::vector<geo::PointCloud>& clouds);

/// Stratified train/test split, per-dimension standardization from the train
/// rows, then a softmax-regression classifier trained by full-batch gradient
/// descent. Requires at least two classes.
ProbeReport linear_probe(const FeatureSet& features, const ProbeConfig& config, std::uint64_t seed);

/// Per trial: n_way classes, m_shot support and `queries` query instances per
/// class, nearest class centroid on L2-normalized features.
ProbeReport few_shot_eval(const FeatureSet& features, std::size_t n_way, std::size_t m_shot,
                          std::size_t queries, std::size_t trials, std::uint64_t seed);

}  // namespace mvmae::probe
