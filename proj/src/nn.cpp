// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/nn.hpp"

#include <cmath>

#include "mvmae/error.hpp"

namespace mvmae::nn {

Tensor ParameterStore::create(const std::string& name, ad::Shape shape, std::vector<double> init,
                              bool trainable) {
  MVMAE_EXPECT(find(name) == nullptr, "ParameterStore: duplicate parameter name '" + name + "'");
  Tensor t = Tensor::from(std::move(shape), std::move(init), trainable);
  params_.push_back({name, t, trainable});
  return t;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_)
    if (p.trainable) p.tensor.zero_grad();
}

std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> w(count);
  for (double& v : w) v = rng.uniform(-a, a);
  return w;
}

std::vector<double> normal_init(std::size_t count, double stddev, Rng& rng) {
  std::vector<double> w(count);
  for (double& v : w) v = stddev * rng.normal();
  return w;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               Rng& rng, LinearInit init) {
  if (init == LinearInit::kFanIn) {
    weight_ = store.create(name + ".weight", {in, out}, fan_in_uniform(in * out, in, rng));
    bias_ = store.create(name + ".bias", {out}, fan_in_uniform(out, in, rng));
  } else {
    weight_ = store.create(name + ".weight", {in, out}, normal_init(in * out, kLinearInitStd, rng));
    bias_ = store.create(name + ".bias", {out}, std::vector<double>(out, 0.0));
  }
}

Tensor Linear::operator()(const Tensor& x) const {
  return ad::add_bias(ad::matmul(x, weight_), bias_);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width)
    : gamma_(store.create(name + ".gamma", {width}, std::vector<double>(width, 1.0))),
      beta_(store.create(name + ".beta", {width}, std::vector<double>(width, 0.0))) {}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ad::layer_norm(x, gamma_, beta_, kEps);
}

Mlp::Mlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
         std::size_t out, Rng& rng)
    : fc1_(store, name + ".fc1", in, hidden, rng), fc2_(store, name + ".fc2", hidden, out, rng) {}

Tensor Mlp::operator()(const Tensor& x) const { return fc2_(ad::gelu(fc1_(x))); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       std::size_t width, std::size_t heads, Rng& rng)
    : qkv_(store, name + ".qkv", width, 3 * width, rng),
      proj_(store, name + ".proj", width, width, rng),
      width_(width),
      heads_(heads) {
  MVMAE_EXPECT(heads > 0 && width % heads == 0, "attention: width must divide into heads");
}

Tensor MultiHeadAttention::operator()(const Tensor& x) const {
  const std::size_t head_dim = width_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor qkv = qkv_(x);
  std::vector<Tensor> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor q = ad::slice(qkv, 1, h * head_dim, head_dim);
    const Tensor k = ad::slice(qkv, 1, width_ + h * head_dim, head_dim);
    const Tensor v = ad::slice(qkv, 1, 2 * width_ + h * head_dim, head_dim);
    const Tensor attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), scale));
    outputs.push_back(ad::matmul(attn, v));
  }
  const Tensor merged = heads_ == 1 ? outputs[0] : ad::concat(outputs, 1);
  return proj_(merged);
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& name,
                                   std::size_t width, std::size_t heads, std::size_t mlp_ratio,
                                   Rng& rng)
    : norm1_(store, name + ".norm1", width),
      attn_(store, name + ".attn", width, heads, rng),
      norm2_(store, name + ".norm2", width),
      mlp_(store, name + ".mlp", width, mlp_ratio * width, width, rng) {}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  const Tensor h = ad::add(x, attn_(norm1_(x)));
  return ad::add(h, mlp_(norm2_(h)));
}

Transformer::Transformer(ParameterStore& store, const std::string& name, std::size_t depth,
                         std::size_t width, std::size_t heads, std::size_t mlp_ratio, Rng& rng) {
  blocks_.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i)
    blocks_.emplace_back(store, name + ".blocks." + std::to_string(i), width, heads, mlp_ratio, rng);
  if (depth > 0) norm_ = LayerNorm(store, name + ".norm", width);
}

Tensor Transformer::operator()(const Tensor& x, const Tensor& pos) const {
  if (blocks_.empty()) return x;
  Tensor h = x;
  for (const auto& block : blocks_) h = block(ad::add(h, pos));
  return norm_(h);
}

}  // namespace mvmae::nn
