// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvmae/error.hpp"

namespace mvmae::ad {

namespace {

using Backward = std::function<void(Node&)>;

Tensor make(Shape shape, std::vector<double> value, const char* op,
            std::initializer_list<Tensor> parents, Backward bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) {
    for (const Tensor& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

// Parent gradient buffer, or nullptr when that parent does not need one.
double* grad_of(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

void expect_rank2(const Tensor& a, const char* op) {
  MVMAE_EXPECT(a.defined() && a.rank() == 2,
               std::string(op) + ": expected rank-2 tensor, got " +
                   (a.defined() ? shape_str(a.shape()) : std::string("<undefined>")));
}

void expect_same(const Tensor& a, const Tensor& b, const char* op) {
  MVMAE_EXPECT(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                           shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_rank2(a, "matmul");
  expect_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  MVMAE_EXPECT(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                                  shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    if (double* dA = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (double* dB = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* d = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    }
    if (double* d = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * bv[i];
    }
    if (double* d = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make(a.shape(), std::move(out), "scale", {a}, [s](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * s;
    }
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  expect_rank2(a, "add_bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  MVMAE_EXPECT(bias.numel() == n, "add_bias: bias has " + std::to_string(bias.numel()) +
                                      " elements, rows have " + std::to_string(n));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + bias.data()[j];
  return make(a.shape(), std::move(out), "add_bias", {a, bias}, [m, n](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) d[i] += self.grad[i];
    }
    if (double* d = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += self.grad[i * n + j];
    }
  });
}

Tensor transpose(const Tensor& a) {
  expect_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return make({n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  MVMAE_EXPECT(numel(shape) == a.numel(), "reshape: cannot view " + shape_str(a.shape()) +
                                              " as " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return make(std::move(shape), std::move(out), "reshape", {a}, [](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  MVMAE_EXPECT(!parts.empty(), "concat: no inputs");
  MVMAE_EXPECT(axis < 2, "concat: axis must be 0 or 1");
  for (const Tensor& p : parts) expect_rank2(p, "concat");
  const std::size_t other = parts[0].dim(1 - axis);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    MVMAE_EXPECT(p.dim(1 - axis) == other, "concat: mismatched non-concatenated extent");
    total += p.dim(axis);
  }
  const Shape shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const std::size_t rows = p.dim(0), cols = p.dim(1);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t dst = axis == 0 ? (off + i) * other + j : i * total + off + j;
        out[dst] = p.data()[i * cols + j];
      }
    off += p.dim(axis);
  }

  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(out);
  node->op = "concat";
  node->is_leaf = false;
  if (grad_enabled()) {
    for (const Tensor& p : parts) node->requires_grad = node->requires_grad || p.requires_grad();
  }
  if (node->requires_grad) {
    for (const Tensor& p : parts) node->parents.push_back(p.shared());
    node->backward = [axis, total, other, offsets](Node& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        double* d = grad_of(self, k);
        if (!d) continue;
        const Shape& ps = self.parents[k]->shape;
        for (std::size_t i = 0; i < ps[0]; ++i)
          for (std::size_t j = 0; j < ps[1]; ++j) {
            const std::size_t src =
                axis == 0 ? (offsets[k] + i) * other + j : i * total + offsets[k] + j;
            d[i * ps[1] + j] += self.grad[src];
          }
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  expect_rank2(a, "slice");
  MVMAE_EXPECT(axis < 2, "slice: axis must be 0 or 1");
  MVMAE_EXPECT(start + len <= a.dim(axis), "slice: range exceeds extent");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const std::size_t rows = axis == 0 ? len : m;
  const std::size_t cols = axis == 0 ? n : len;
  const std::size_t r0 = axis == 0 ? start : 0;
  const std::size_t c0 = axis == 0 ? 0 : start;
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.data()[(r0 + i) * n + c0 + j];
  return make({rows, cols}, std::move(out), "slice", {a}, [=](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) d[(r0 + i) * n + c0 + j] += self.grad[i * cols + j];
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  expect_rank2(a, "gather_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Index index(idx.begin(), idx.end());
  std::vector<double> out(index.size() * n);
  for (std::size_t r = 0; r < index.size(); ++r) {
    MVMAE_EXPECT(index[r] < m, "gather_rows: index out of range");
    std::copy_n(a.data().data() + index[r] * n, n, out.data() + r * n);
  }
  const std::size_t rows = index.size();
  return make({rows, n}, std::move(out), "gather_rows", {a},
              [index = std::move(index), n](Node& self) {
                if (double* d = grad_of(self, 0)) {
                  for (std::size_t r = 0; r < index.size(); ++r)
                    for (std::size_t j = 0; j < n; ++j) d[index[r] * n + j] += self.grad[r * n + j];
                }
              });
}

Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> idx, std::size_t rows) {
  expect_rank2(a, "scatter_rows");
  MVMAE_EXPECT(idx.size() == a.dim(0), "scatter_rows: one index per input row required");
  const std::size_t n = a.dim(1);
  Index index(idx.begin(), idx.end());
  std::vector<double> out(rows * n, 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    MVMAE_EXPECT(index[r] < rows, "scatter_rows: index out of range");
    for (std::size_t j = 0; j < n; ++j) out[index[r] * n + j] += a.data()[r * n + j];
  }
  return make({rows, n}, std::move(out), "scatter_rows", {a},
              [index = std::move(index), n](Node& self) {
                if (double* d = grad_of(self, 0)) {
                  for (std::size_t r = 0; r < index.size(); ++r)
                    for (std::size_t j = 0; j < n; ++j) d[r * n + j] += self.grad[index[r] * n + j];
                }
              });
}

Tensor softmax_rows(const Tensor& a) {
  expect_rank2(a, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double* y = out.data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return make(a.shape(), std::move(out), "softmax_rows", {a}, [m, n](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = self.value.data() + i * n;
        const double* g = self.grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] += y[j] * (g[j] - dot);
      }
    }
  });
}

namespace {

Tensor layer_norm_impl(const Tensor& a, const Tensor* gamma, const Tensor* beta, double eps) {
  expect_rank2(a, "layer_norm");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (gamma) {
    MVMAE_EXPECT(gamma->numel() == n && beta->numel() == n, "layer_norm: affine size mismatch");
  }
  std::vector<double> xhat(a.numel());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) xhat[i * n + j] = (x[j] - mu) * inv_std[i];
  }
  std::vector<double> out = xhat;
  if (gamma) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out[i * n + j] = xhat[i * n + j] * gamma->data()[j] + beta->data()[j];
  }
  auto bw = [m, n, affine = gamma != nullptr, xhat = std::move(xhat),
             inv_std = std::move(inv_std)](Node& self) {
    const double* G = self.grad.data();
    std::vector<double> dxhat(G, G + m * n);
    if (affine) {
      const double* gam = self.parents[1]->value.data();
      if (double* dg = grad_of(self, 1)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dg[j] += G[i * n + j] * xhat[i * n + j];
      }
      if (double* db = grad_of(self, 2)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) db[j] += G[i * n + j];
      }
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dxhat[i * n + j] *= gam[j];
    }
    if (double* dx = grad_of(self, 0)) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        const double* dh = dxhat.data() + i * n;
        const double* h = xhat.data() + i * n;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          s1 += dh[j];
          s2 += dh[j] * h[j];
        }
        for (std::size_t j = 0; j < n; ++j)
          dx[i * n + j] += inv_std[i] * (dh[j] - inv_n * s1 - h[j] * inv_n * s2);
      }
    }
  };
  if (gamma) return make(a.shape(), std::move(out), "layer_norm", {a, *gamma, *beta}, std::move(bw));
  return make(a.shape(), std::move(out), "layer_norm", {a}, std::move(bw));
}

}  // namespace

Tensor layer_norm(const Tensor& a, double eps) { return layer_norm_impl(a, nullptr, nullptr, eps); }

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  return layer_norm_impl(a, &gamma, &beta, eps);
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.data()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  return make(a.shape(), std::move(out), "gelu", {a}, [](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const auto& xv = self.parents[0]->value;
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const double x = xv[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        d[i] += self.grad[i] * (cdf + x * pdf);
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make({}, {s}, "sum", {a}, [](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const double g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) d[i] += g;
    }
  });
}

Tensor mean(const Tensor& a) {
  MVMAE_EXPECT(a.numel() > 0, "mean: empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return make({}, {s * inv}, "mean", {a}, [inv](Node& self) {
    if (double* d = grad_of(self, 0)) {
      const double g = self.grad[0] * inv;
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) d[i] += g;
    }
  });
}

Tensor group_max(const Tensor& a, const Groups& groups) {
  expect_rank2(a, "group_max");
  const std::size_t m = a.dim(0), n = a.dim(1), g = groups.size();
  std::vector<double> out(g * n);
  Index argmax(g * n);
  for (std::size_t k = 0; k < g; ++k) {
    MVMAE_EXPECT(!groups[k].empty(), "group_max: empty group");
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = groups[k][0];
      MVMAE_EXPECT(best < m, "group_max: row index out of range");
      for (std::size_t r : groups[k]) {
        MVMAE_EXPECT(r < m, "group_max: row index out of range");
        if (a.data()[r * n + j] > a.data()[best * n + j]) best = r;
      }
      argmax[k * n + j] = best;
      out[k * n + j] = a.data()[best * n + j];
    }
  }
  return make({g, n}, std::move(out), "group_max", {a},
              [argmax = std::move(argmax), g, n](Node& self) {
                if (double* d = grad_of(self, 0)) {
                  for (std::size_t k = 0; k < g; ++k)
                    for (std::size_t j = 0; j < n; ++j)
                      d[argmax[k * n + j] * n + j] += self.grad[k * n + j];
                }
              });
}

Tensor group_mean(const Tensor& a, const Groups& groups) {
  expect_rank2(a, "group_mean");
  const std::size_t m = a.dim(0), n = a.dim(1), g = groups.size();
  std::vector<double> out(g * n, 0.0);
  for (std::size_t k = 0; k < g; ++k) {
    MVMAE_EXPECT(!groups[k].empty(), "group_mean: empty group");
    for (std::size_t r : groups[k]) {
      MVMAE_EXPECT(r < m, "group_mean: row index out of range");
      for (std::size_t j = 0; j < n; ++j) out[k * n + j] += a.data()[r * n + j];
    }
    const double inv = 1.0 / static_cast<double>(groups[k].size());
    for (std::size_t j = 0; j < n; ++j) out[k * n + j] *= inv;
  }
  return make({g, n}, std::move(out), "group_mean", {a}, [groups, n](Node& self) {
    if (double* d = grad_of(self, 0)) {
      for (std::size_t k = 0; k < groups.size(); ++k) {
        const double inv = 1.0 / static_cast<double>(groups[k].size());
        for (std::size_t r : groups[k])
          for (std::size_t j = 0; j < n; ++j) d[r * n + j] += inv * self.grad[k * n + j];
      }
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  expect_same(a, b, "mse");
  MVMAE_EXPECT(a.numel() > 0, "mse: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double diff = a.data()[i] - b.data()[i];
    s += diff * diff;
  }
  const double inv = 1.0 / static_cast<double>(a.numel());
  return make({}, {s * inv}, "mse", {a, b}, [inv](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const double g = 2.0 * inv * self.grad[0];
    if (double* d = grad_of(self, 0)) {
      for (std::size_t i = 0; i < av.size(); ++i) d[i] += g * (av[i] - bv[i]);
    }
    if (double* d = grad_of(self, 1)) {
      for (std::size_t i = 0; i < av.size(); ++i) d[i] -= g * (av[i] - bv[i]);
    }
  });
}

}  // namespace mvmae::ad
