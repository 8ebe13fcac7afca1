// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mvmae/ops.hpp"
#include "mvmae/rng.hpp"
#include "mvmae/tensor.hpp"

namespace mvmae::nn {

using ad::Tensor;

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

/// Owns every named parameter of a model, in registration order.
class ParameterStore {
 public:
  Tensor create(const std::string& name, ad::Shape shape, std::vector<double> init,
                bool trainable = true);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  const Parameter* find(const std::string& name) const;
  std::size_t total_elements() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

/// `count` draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, Rng& rng);
std::vector<double> normal_init(std::size_t count, double stddev, Rng& rng);

inline constexpr double kLinearInitStd = 0.02;

enum class LinearInit {
  kNormal,  // weights ~ N(0, 0.02^2), biases zero
  kFanIn,   // weights and biases ~ U(+-1/sqrt(in)), for output heads
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         LinearInit init = LinearInit::kNormal);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

 private:
  Tensor weight_;  // [in, out]
  Tensor bias_;    // [out]
};

class LayerNorm {
 public:
  static constexpr double kEps = 1e-6;
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor gamma_;
  Tensor beta_;
};

/// Two affine layers with GELU between.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  Linear fc1_;
  Linear fc2_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width,
                     std::size_t heads, Rng& rng);
  /// Full self-attention over the rows of x [L, C].
  Tensor operator()(const Tensor& x) const;

 private:
  Linear qkv_;
  Linear proj_;
  std::size_t width_ = 0;
  std::size_t heads_ = 1;
};

/// Pre-normalization block: x + attn(ln(x)), then + mlp(ln(x)).
class TransformerBlock {
 public:
  TransformerBlock(ParameterStore& store, const std::string& name, std::size_t width,
                   std::size_t heads, std::size_t mlp_ratio, Rng& rng);
  Tensor operator()(const Tensor& x) const;

 private:
  LayerNorm norm1_;
  MultiHeadAttention attn_;
  LayerNorm norm2_;
  Mlp mlp_;
};

/// Stack of blocks with `pos` re-added to the input of every block and a final
/// LayerNorm. A zero-depth stack is the identity.
class Transformer {
 public:
  Transformer() = default;
  Transformer(ParameterStore& store, const std::string& name, std::size_t depth, std::size_t width,
              std::size_t heads, std::size_t mlp_ratio, Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& pos) const;
  std::size_t depth() const { return blocks_.size(); }

 private:
  std::vector<TransformerBlock> blocks_;
  LayerNorm norm_;
};

}  // namespace mvmae::nn
