// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mvmae/error.hpp"
#include "mvmae/model.hpp"
#include "mvmae/ops.hpp"
#include "mvmae/rng.hpp"
#include "mvmae/shapes.hpp"

namespace mvmae::gc {

using ad::Tensor;

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void record(CheckResult& r, std::size_t i, double analytic, double numeric) {
  const double e = relative_error(analytic, numeric);
  ++r.checked;
  if (e > r.max_rel_error || r.checked == 1) {
    r.max_rel_error = e;
    r.worst_index = i;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
}

double central_difference(const std::function<Tensor()>& loss, Tensor& x, std::size_t i, double h) {
  auto v = x.mutable_data();
  const double saved = v[i];
  ad::NoGradGuard guard;
  const auto at = [&](double offset) {
    v[i] = saved + offset;
    return loss().item();
  };
  // Fourth-order stencil: truncation error O(h^4) instead of O(h^2).
  const double near = at(h) - at(-h);
  const double far = at(2.0 * h) - at(-2.0 * h);
  v[i] = saved;
  return (8.0 * near - far) / (12.0 * h);
}

Tensor random_tensor(ad::Shape shape, Rng& rng, bool grad = true) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

}  // namespace

std::vector<CheckResult> check_function(const std::function<Tensor()>& loss,
                                        std::vector<Tensor> inputs,
                                        const std::vector<std::string>& names, double h) {
  MVMAE_EXPECT(names.size() == inputs.size(), "check_function: one name per input");
  for (auto& x : inputs) x.zero_grad();
  ad::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& x : inputs) analytic.emplace_back(x.grad().begin(), x.grad().end());

  std::vector<CheckResult> out;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    CheckResult r;
    r.name = names[t];
    for (std::size_t i = 0; i < inputs[t].numel(); ++i)
      record(r, i, analytic[t][i], central_difference(loss, inputs[t], i, h));
    out.push_back(r);
  }
  return out;
}

std::vector<CheckResult> check_ops(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> results;

  // Reduce any output to a scalar through a fixed random weighting.
  auto run = [&](const std::string& name, std::vector<Tensor> inputs,
                 const std::function<Tensor(const std::vector<Tensor>&)>& op) {
    Tensor weights;
    auto loss = [&]() {
      Tensor out = op(inputs);
      if (!weights.defined()) weights = random_tensor(out.shape(), rng, false);
      return ad::sum(ad::mul(out, weights));
    };
    CheckResult merged;
    merged.name = name;
    for (const auto& r : check_function(loss, inputs, std::vector<std::string>(inputs.size(), name))) {
      if (merged.checked == 0 || r.max_rel_error > merged.max_rel_error) {
        merged.max_rel_error = r.max_rel_error;
        merged.worst_index = r.worst_index;
        merged.worst_analytic = r.worst_analytic;
        merged.worst_numeric = r.worst_numeric;
      }
      merged.checked += r.checked;
    }
    results.push_back(merged);
  };
  auto t = [&](std::size_t m, std::size_t n) { return random_tensor({m, n}, rng); };

  run("matmul", {t(3, 4), t(4, 2)}, [](auto& x) { return ad::matmul(x[0], x[1]); });
  run("add", {t(3, 4), t(3, 4)}, [](auto& x) { return ad::add(x[0], x[1]); });
  run("sub", {t(3, 4), t(3, 4)}, [](auto& x) { return ad::sub(x[0], x[1]); });
  run("mul", {t(3, 4), t(3, 4)}, [](auto& x) { return ad::mul(x[0], x[1]); });
  run("scale", {t(3, 4)}, [](auto& x) { return ad::scale(x[0], -1.7); });
  run("add_bias", {t(3, 4), t(1, 4)}, [](auto& x) { return ad::add_bias(x[0], x[1]); });
  run("transpose", {t(3, 4)}, [](auto& x) { return ad::transpose(x[0]); });
  run("reshape", {t(3, 4)}, [](auto& x) { return ad::reshape(x[0], {6, 2}); });
  run("concat", {t(2, 3), t(1, 3), t(3, 2)}, [](auto& x) {
    return ad::concat({ad::concat({x[0], x[1]}, 0), x[2]}, 1);
  });
  run("slice", {t(4, 5)}, [](auto& x) { return ad::slice(ad::slice(x[0], 0, 1, 2), 1, 2, 3); });
  run("gather_rows", {t(4, 3)}, [](auto& x) {
    const ad::Index idx{2, 0, 2, 3};
    return ad::gather_rows(x[0], idx);
  });
  run("scatter_rows", {t(3, 2)}, [](auto& x) {
    const ad::Index idx{4, 1, 4};
    return ad::scatter_rows(x[0], idx, 5);
  });
  run("softmax_rows", {t(3, 5)}, [](auto& x) { return ad::softmax_rows(x[0]); });
  run("layer_norm", {t(3, 6), t(1, 6), t(1, 6)},
      [](auto& x) { return ad::layer_norm(x[0], x[1], x[2], 1e-6); });
  run("gelu", {t(3, 4)}, [](auto& x) { return ad::gelu(x[0]); });
  run("sum", {t(3, 4)}, [](auto& x) { return ad::sum(x[0]); });
  run("mean", {t(3, 4)}, [](auto& x) { return ad::mean(x[0]); });
  run("group_max", {t(6, 3)}, [](auto& x) { return ad::group_max(x[0], {{0, 1, 2}, {3, 4}, {5}}); });
  run("group_mean", {t(6, 3)}, [](auto& x) { return ad::group_mean(x[0], {{0, 1, 2}, {3, 4}, {5}}); });
  run("mse", {t(3, 4), t(3, 4)}, [](auto& x) { return ad::mse(x[0], x[1]); });
  run("chamfer_l2", {t(5, 3), t(4, 3)}, [](auto& x) { return model::chamfer_l2(x[0], x[1]); });
  return results;
}

const CheckResult& ModelCheckReport::worst() const {
  MVMAE_EXPECT(!params.empty(), "ModelCheckReport: no parameters checked");
  return *std::max_element(params.begin(), params.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

bool ModelCheckReport::passed(double tol) const {
  return std::all_of(params.begin(), params.end(), [tol](const auto& p) { return p.passed(tol); });
}

ModelCheckReport check_model(const ModelConfig& config, std::uint64_t seed, double h) {
  config.validate();
  model::MultiviewMae net(config, mix_seed(seed, 1));
  data::SyntheticShape shape;
  shape.kind = "torus";
  shape.a = 1.0;
  shape.b = 0.4;
  shape.n_points = config.n_points;
  shape.seed = mix_seed(seed, 2);
  const geo::PointCloud cloud = data::generate_shape(shape);
  Rng rng(mix_seed(seed, 3));
  const model::PretrainSample sample = model::prepare_sample(cloud, config, net.pose_pool(), rng);

  auto loss = [&]() { return net.forward(sample).loss; };
  net.params().zero_grad();
  const Tensor l = loss();
  ad::backward(l);

  ModelCheckReport report;
  report.loss = l.item();
  for (auto& p : net.params().all()) {
    if (!p.trainable) continue;
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    CheckResult r;
    r.name = p.name;
    for (std::size_t i = 0; i < p.tensor.numel(); ++i)
      record(r, i, analytic[i], central_difference(loss, p.tensor, i, h));
    report.elements += r.checked;
    report.params.push_back(r);
  }
  return report;
}

}  // namespace mvmae::gc
