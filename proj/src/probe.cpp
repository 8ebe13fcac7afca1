// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mvmae/error.hpp"
#include "mvmae/rng.hpp"

namespace mvmae::probe {

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::map<int, std::vector<std::size_t>> rows_by_class(const FeatureSet& f) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < f.rows(); ++i) out[f.labels[i]].push_back(i);
  return out;
}

}  // namespace

nlohmann::json to_json(const ProbeReport& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["accuracy"] = r.accuracy;
  if (r.mode == "fewshot") {
    j["accuracy_std"] = r.accuracy_std;
    j["trial_accuracies"] = r.trial_accuracies;
    j["n_way"] = r.n_way;
    j["m_shot"] = r.m_shot;
    j["queries"] = r.queries;
  } else {
    j["confusion"] = r.confusion;
    j["train_count"] = r.train_count;
    j["test_count"] = r.test_count;
  }
  j["seeds"] = r.seeds;
  return j;
}

FeatureSet extract_features(const model::MultiviewMae& model,
                            const std::vector<geo::PointCloud>& clouds) {
  FeatureSet f;
  f.dim = 2 * model.config().width;
  f.values.reserve(clouds.size() * f.dim);
  for (const auto& c : clouds) {
    MVMAE_EXPECT(c.label.has_value(), "extract_features: cloud '" + c.source_id + "' has no label");
    const auto feat = model.encoder_features(c);
    f.values.insert(f.values.end(), feat.begin(), feat.end());
    f.labels.push_back(*c.label);
  }
  return f;
}

ProbeReport linear_probe(const FeatureSet& f, const ProbeConfig& cfg, std::uint64_t seed) {
  const auto by_class = rows_by_class(f);
  MVMAE_EXPECT(by_class.size() >= 2, "linear_probe: need at least two classes");
  MVMAE_EXPECT(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0,
               "linear_probe: train_fraction must lie in (0, 1)");

  // Dense class ids in label order.
  std::map<int, std::size_t> class_id;
  for (const auto& [label, rows] : by_class) class_id.emplace(label, class_id.size());
  const std::size_t n_cls = class_id.size();

  Rng rng(seed);
  std::vector<std::size_t> train, test;
  for (const auto& [label, rows] : by_class) {
    std::vector<std::size_t> r = rows;
    shuffle(r, rng);
    MVMAE_EXPECT(r.size() >= 2, "linear_probe: every class needs at least two instances");
    auto n_train = static_cast<std::size_t>(std::floor(cfg.train_fraction * r.size() + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, r.size() - 1);
    train.insert(train.end(), r.begin(), r.begin() + n_train);
    test.insert(test.end(), r.begin() + n_train, r.end());
  }

  const std::size_t d = f.dim;
  std::vector<double> mean(d, 0.0), stdev(d, 0.0);
  for (auto i : train)
    for (std::size_t j = 0; j < d; ++j) mean[j] += f.row(i)[j];
  for (auto& m : mean) m /= static_cast<double>(train.size());
  for (auto i : train)
    for (std::size_t j = 0; j < d; ++j) stdev[j] += std::pow(f.row(i)[j] - mean[j], 2);
  for (auto& s : stdev) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-8;
  auto standardized = [&](const std::vector<std::size_t>& rows) {
    std::vector<double> x(rows.size() * d);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) x[r * d + j] = (f.row(rows[r])[j] - mean[j]) / stdev[j];
    return x;
  };
  const auto xtr = standardized(train);
  const auto xte = standardized(test);

  std::vector<double> w(d * n_cls, 0.0), b(n_cls, 0.0);
  std::vector<double> gw(d * n_cls), gb(n_cls), p(n_cls);
  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t r = 0; r < train.size(); ++r) {
      const double* x = &xtr[r * d];
      for (std::size_t c = 0; c < n_cls; ++c) {
        double z = b[c];
        for (std::size_t j = 0; j < d; ++j) z += x[j] * w[j * n_cls + c];
        p[c] = z;
      }
      const double zmax = *std::max_element(p.begin(), p.end());
      double sum = 0.0;
      for (auto& v : p) sum += (v = std::exp(v - zmax));
      const std::size_t y = class_id.at(f.labels[train[r]]);
      for (std::size_t c = 0; c < n_cls; ++c) {
        const double g = (p[c] / sum - (c == y ? 1.0 : 0.0)) * inv_n;
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[j * n_cls + c] += g * x[j];
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.lr * (gw[k] + cfg.weight_decay * w[k]);
    for (std::size_t c = 0; c < n_cls; ++c) b[c] -= cfg.lr * gb[c];
  }

  ProbeReport rep;
  rep.mode = "linear";
  rep.confusion.assign(n_cls, std::vector<std::size_t>(n_cls, 0));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const double* x = &xte[r * d];
    std::size_t best = 0;
    double best_z = -INFINITY;
    for (std::size_t c = 0; c < n_cls; ++c) {
      double z = b[c];
      for (std::size_t j = 0; j < d; ++j) z += x[j] * w[j * n_cls + c];
      if (z > best_z) best_z = z, best = c;
    }
    const std::size_t y = class_id.at(f.labels[test[r]]);
    ++rep.confusion[y][best];
    correct += best == y;
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  rep.train_count = train.size();
  rep.test_count = test.size();
  rep.seeds = {seed};
  return rep;
}

ProbeReport few_shot_eval(const FeatureSet& f, std::size_t n_way, std::size_t m_shot,
                          std::size_t queries, std::size_t trials, std::uint64_t seed) {
  MVMAE_EXPECT(n_way >= 2, "few_shot_eval: n_way must be at least 2");
  MVMAE_EXPECT(m_shot >= 1 && queries >= 1 && trials >= 1,
               "few_shot_eval: m_shot, queries and trials must be positive");
  const auto by_class = rows_by_class(f);
  std::vector<int> eligible;
  for (const auto& [label, rows] : by_class)
    if (rows.size() >= m_shot + queries) eligible.push_back(label);
  MVMAE_EXPECT(eligible.size() >= n_way,
               "few_shot_eval: " + std::to_string(n_way) + "-way " + std::to_string(m_shot) +
                   "-shot needs " + std::to_string(n_way) + " classes with at least " +
                   std::to_string(m_shot + queries) + " instances, found " +
                   std::to_string(eligible.size()));

  const std::size_t d = f.dim;
  auto unit_row = [&](std::size_t i) {
    std::vector<double> v(f.row(i), f.row(i) + d);
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
      for (double& x : v) x /= n;
    return v;
  };

  Rng rng(seed);
  ProbeReport rep;
  rep.mode = "fewshot";
  rep.n_way = n_way;
  rep.m_shot = m_shot;
  rep.queries = queries;
  rep.seeds = {seed};
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<std::size_t> cls(eligible.size());
    std::iota(cls.begin(), cls.end(), std::size_t{0});
    shuffle(cls, rng);
    cls.resize(n_way);

    std::vector<std::vector<double>> centroids;
    std::vector<std::vector<std::size_t>> query_rows;
    for (auto c : cls) {
      std::vector<std::size_t> rows = by_class.at(eligible[c]);
      shuffle(rows, rng);
      std::vector<double> centroid(d, 0.0);
      for (std::size_t s = 0; s < m_shot; ++s) {
        const auto u = unit_row(rows[s]);
        for (std::size_t j = 0; j < d; ++j) centroid[j] += u[j] / static_cast<double>(m_shot);
      }
      centroids.push_back(std::move(centroid));
      query_rows.emplace_back(rows.begin() + m_shot, rows.begin() + m_shot + queries);
    }

    std::size_t correct = 0;
    for (std::size_t c = 0; c < n_way; ++c) {
      for (auto q : query_rows[c]) {
        const auto u = unit_row(q);
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < n_way; ++k) {
          double dist = 0.0;
          for (std::size_t j = 0; j < d; ++j) dist += std::pow(u[j] - centroids[k][j], 2);
          if (dist < best_d) best_d = dist, best = k;
        }
        correct += best == c;
      }
    }
    rep.trial_accuracies.push_back(static_cast<double>(correct) /
                                   static_cast<double>(n_way * queries));
  }
  const double n = static_cast<double>(trials);
  rep.accuracy = std::accumulate(rep.trial_accuracies.begin(), rep.trial_accuracies.end(), 0.0) / n;
  double var = 0.0;
  for (double a : rep.trial_accuracies) var += (a - rep.accuracy) * (a - rep.accuracy);
  rep.accuracy_std = std::sqrt(var / n);
  return rep;
}

}  // namespace mvmae::probe
