// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mvmae/error.hpp"
#include "mvmae/gradcheck.hpp"
#include "mvmae/nn.hpp"
#include "mvmae/ops.hpp"
#include "mvmae/optim.hpp"
#include "mvmae/rng.hpp"

using namespace mvmae;
using ad::Tensor;

namespace {

Tensor randn(std::size_t m, std::size_t n, Rng& rng, bool grad = true) {
  std::vector<double> v(m * n);
  for (double& x : v) x = rng.normal();
  return Tensor::from({m, n}, v, grad);
}

// Test-local central-difference oracle, independent of the library's checker.
std::vector<double> numeric_grad(const std::function<double()>& f, Tensor& x, double h = 1e-6) {
  std::vector<double> g(x.numel());
  auto v = x.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = v[i];
    v[i] = s + h;
    const double up = f();
    v[i] = s - h;
    const double down = f();
    v[i] = s;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("backward of sum is all ones") {
  Tensor x = Tensor::from({1, 3}, {0.3, -2.0, 7.0}, true);
  ad::backward(ad::sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares is 2x") {
  Tensor x = Tensor::from({1, 2}, {2.0, -1.0}, true);
  ad::backward(ad::sum(ad::mul(x, x)));
  CHECK(x.grad()[0] == 4.0);
  CHECK(x.grad()[1] == -2.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::from({1, 2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(ad::backward(ad::scale(x, 2.0)), ContractViolation);
}

TEST_CASE("unreachable trainable leaves keep a zero gradient") {
  Rng rng(1);
  nn::ParameterStore store;
  Tensor used = store.create("used", {1, 2}, {1.0, 2.0});
  Tensor unused = store.create("unused", {1, 2}, {3.0, 4.0});
  store.zero_grad();
  ad::backward(ad::sum(ad::mul(used, used)));
  CHECK(unused.has_grad());
  for (double g : unused.grad()) CHECK(g == 0.0);
  CHECK(used.grad()[1] == 4.0);
}

TEST_CASE("repeated backward passes accumulate into leaves") {
  Tensor x = Tensor::from({1, 1}, {3.0}, true);
  ad::backward(ad::sum(ad::mul(x, x)));
  ad::backward(ad::sum(ad::mul(x, x)));
  CHECK(x.grad()[0] == 12.0);
}

TEST_CASE("NoGradGuard records no graph") {
  Tensor x = Tensor::from({1, 1}, {3.0}, true);
  ad::NoGradGuard guard;
  Tensor y = ad::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("composite graph matches an independent finite-difference oracle") {
  Rng rng(11);
  Tensor a = randn(4, 5, rng), b = randn(5, 3, rng), gamma = randn(1, 3, rng), beta = randn(1, 3, rng);
  auto build = [&]() {
    Tensor h = ad::gelu(ad::matmul(a, b));
    h = ad::layer_norm(h, gamma, beta, 1e-6);
    h = ad::softmax_rows(h);
    return ad::sum(ad::mul(h, h));
  };
  ad::backward(build());
  for (Tensor* t : {&a, &b, &gamma, &beta}) {
    const std::vector<double> analytic(t->grad().begin(), t->grad().end());
    const auto numeric = numeric_grad([&] {
      ad::NoGradGuard g;
      return build().item();
    }, *t);
    for (std::size_t i = 0; i < numeric.size(); ++i)
      CHECK(analytic[i] == doctest::Approx(numeric[i]).epsilon(1e-6));
  }
}

TEST_CASE("every differentiable op passes its finite-difference check") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& r : gc::check_ops(seed)) {
      INFO(r.name << " seed " << seed << " err " << r.max_rel_error);
      CHECK(r.passed());
      CHECK(r.checked > 0);
    }
  }
}

TEST_CASE("gradient fault hook is caught and names the op") {
  ad::set_gradient_fault("softmax_rows", 1.5);
  std::vector<std::string> failing;
  for (const auto& r : gc::check_ops(5))
    if (!r.passed()) failing.push_back(r.name);
  ad::set_gradient_fault("", 1.0);
  REQUIRE(failing.size() >= 1);
  CHECK(failing.front() == "softmax_rows");
}

TEST_CASE("softmax rows sum to one and layer norm standardizes rows") {
  Rng rng(3);
  Tensor x = randn(6, 9, rng, false);
  Tensor s = ad::softmax_rows(ad::scale(x, 10.0));
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 9; ++j) sum += s.at(i, j);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  Tensor n = ad::layer_norm(ad::scale(x, 4.0), 1e-6);
  for (std::size_t i = 0; i < 6; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 9; ++j) mean += n.at(i, j) / 9.0;
    for (std::size_t j = 0; j < 9; ++j) var += (n.at(i, j) - mean) * (n.at(i, j) - mean) / 9.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax stays finite for large logits") {
  Tensor x = Tensor::from({1, 3}, {1000.0, 999.0, -1000.0});
  Tensor s = ad::softmax_rows(x);
  for (double v : s.data()) CHECK(std::isfinite(v));
}

TEST_CASE("gelu is the exact erf form") {
  Tensor x = Tensor::from({1, 3}, {1.0, -1.0, 0.0});
  Tensor y = ad::gelu(x);
  CHECK(y.data()[0] == doctest::Approx(0.5 * (1 + std::erf(1 / std::sqrt(2.0)))).epsilon(1e-15));
  CHECK(y.data()[1] == doctest::Approx(-0.5 * (1 + std::erf(-1 / std::sqrt(2.0)))).epsilon(1e-15));
  CHECK(y.data()[2] == 0.0);
}

TEST_CASE("group reductions") {
  Tensor x = Tensor::from({3, 2}, {1, 5, 3, -1, 2, 2});
  Tensor mx = ad::group_max(x, {{0, 1}, {2}});
  Tensor mn = ad::group_mean(x, {{0, 1}, {2}});
  CHECK(mx.at(0, 0) == 3);
  CHECK(mx.at(0, 1) == 5);
  CHECK(mx.at(1, 0) == 2);
  CHECK(mn.at(0, 0) == 2);
  CHECK(mn.at(0, 1) == 2);
}

TEST_CASE("shape mismatches are contract violations") {
  Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(ad::add(a, b), ContractViolation);
  CHECK_THROWS_AS(ad::matmul(a, a), ContractViolation);
  CHECK_THROWS_AS(ad::mse(a, b), ContractViolation);
}

TEST_CASE("forward and backward are bit-deterministic") {
  auto run = [] {
    Rng rng(9);
    nn::ParameterStore store;
    nn::Transformer t(store, "t", 2, 8, 2, 4, rng);
    Tensor x = randn(5, 8, rng, false), pos = randn(5, 8, rng, false);
    store.zero_grad();
    Tensor loss = ad::sum(ad::mul(t(x, pos), t(x, pos)));
    ad::backward(loss);
    std::vector<double> out{loss.item()};
    for (const auto& p : store.all()) out.insert(out.end(), p.tensor.grad().begin(), p.tensor.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("zero-depth transformer is the identity") {
  Rng rng(2);
  nn::ParameterStore store;
  nn::Transformer t(store, "t", 0, 8, 2, 4, rng);
  Tensor x = randn(4, 8, rng, false), pos = randn(4, 8, rng, false);
  Tensor y = t(x, pos);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  CHECK(store.all().empty());
}

TEST_CASE("linear init schemes") {
  Rng rng(4);
  nn::ParameterStore store;
  nn::Linear normal(store, "n", 64, 32, rng);
  nn::Linear head(store, "h", 64, 32, rng, nn::LinearInit::kFanIn);

  const auto w = store.find("n.weight")->tensor.data();
  double sq = 0;
  for (double v : w) sq += v * v;
  CHECK(std::sqrt(sq / static_cast<double>(w.size())) == doctest::Approx(0.02).epsilon(0.05));
  for (double v : store.find("n.bias")->tensor.data()) CHECK(v == 0.0);

  const double bound = 1.0 / 8.0;
  double hw = 0;
  for (double v : store.find("h.weight")->tensor.data()) {
    CHECK(std::abs(v) <= bound);
    hw = std::max(hw, std::abs(v));
  }
  CHECK(hw > 0.9 * bound);
  bool nonzero_bias = false;
  for (double v : store.find("h.bias")->tensor.data()) {
    CHECK(std::abs(v) <= bound);
    nonzero_bias = nonzero_bias || v != 0.0;
  }
  CHECK(nonzero_bias);
}

TEST_CASE("parameter names are unique") {
  nn::ParameterStore store;
  store.create("w", {1, 1}, {0.0});
  CHECK_THROWS_AS(store.create("w", {1, 1}, {0.0}), ContractViolation);
}

TEST_CASE("adamw: zero gradient and zero decay leave parameters unchanged") {
  nn::ParameterStore store;
  store.create("p", {1, 2}, {0.7, -1.3});
  optim::AdamWHyper h;
  h.weight_decay = 0.0;
  auto state = optim::make_state(store.all(), h);
  store.zero_grad();
  optim::adamw_step(store.all(), state, 0.1);
  CHECK(store.all()[0].tensor.data()[0] == 0.7);
  CHECK(store.all()[0].tensor.data()[1] == -1.3);
  CHECK(state.step == 1);
}

TEST_CASE("adamw: first step with unit gradient moves by lr") {
  nn::ParameterStore store;
  Tensor p = store.create("p", {1, 1}, {1.0});
  optim::AdamWHyper h;
  h.weight_decay = 0.0;
  auto state = optim::make_state(store.all(), h);
  store.zero_grad();
  p.mutable_grad()[0] = 1.0;
  optim::adamw_step(store.all(), state, 0.1);
  // m_hat = 1, v_hat = 1 after bias correction.
  CHECK(p.data()[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adamw: decoupled weight decay with zero gradient") {
  nn::ParameterStore store;
  Tensor p = store.create("p", {1, 1}, {3.0});
  Tensor frozen = store.create("f", {1, 1}, {3.0}, false);
  optim::AdamWHyper h;
  h.weight_decay = 0.05;
  auto state = optim::make_state(store.all(), h);
  store.zero_grad();
  optim::adamw_step(store.all(), state, 2e-4);
  CHECK(p.data()[0] == doctest::Approx(3.0 * (1 - 1e-5)).epsilon(1e-15));
  CHECK(frozen.data()[0] == 3.0);
  CHECK(state.m[1].empty());
}

TEST_CASE("adamw: step counter strictly increases") {
  nn::ParameterStore store;
  store.create("p", {1, 1}, {1.0});
  auto state = optim::make_state(store.all(), {});
  store.zero_grad();
  for (int i = 1; i <= 3; ++i) {
    optim::adamw_step(store.all(), state, 1e-3);
    CHECK(state.step == static_cast<std::uint64_t>(i));
  }
}

TEST_CASE("cosine schedule") {
  CHECK(optim::cosine_lr(0, 100, 2e-4, 1e-6) == doctest::Approx(2e-4));
  CHECK(optim::cosine_lr(100, 100, 2e-4, 1e-6) == doctest::Approx(1e-6));
  CHECK(optim::cosine_lr(50, 100, 2e-4, 0.0) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(optim::cosine_lr(10, 110, 2e-4, 0.0, 10) == doctest::Approx(2e-4));
  CHECK(optim::cosine_lr(5, 110, 2e-4, 0.0, 10) == doctest::Approx(1e-4));
  CHECK(optim::cosine_lr(60, 110, 2e-4, 0.0, 10) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK_THROWS_AS(optim::cosine_lr(0, 0, 1e-3, 0.0), ContractViolation);
}

TEST_CASE("rng streams are reproducible and restorable") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  const std::string s = a.state();
  const double u1 = a.uniform(), n1 = a.normal();
  Rng c(0);
  c.restore(s);
  CHECK(c.uniform() == u1);
  CHECK(c.normal() == n1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.below(7) < 7u);
    const double u = a.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}
