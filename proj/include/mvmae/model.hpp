// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "mvmae/config.hpp"
#include "mvmae/geometry.hpp"
#include "mvmae/nn.hpp"
#include "mvmae/projection.hpp"
#include "mvmae/tokenizer.hpp"

namespace mvmae::model {

using ad::Tensor;

/// Everything stochastic about one pretraining example, drawn up front so the
/// network forward is a pure function of the parameters.
struct PretrainSample {
  tok::PatchSet patches;
  tok::MaskPlan mask;
  std::vector<std::size_t> view_ids;  // indices into the pose pool
  std::vector<proj::CameraPose> poses;
  std::vector<proj::DepthMap> targets;  // rendered from the full cloud
};

/// Patching, masking, view selection (uniform without replacement) and
/// ground-truth depth rendering.
PretrainSample prepare_sample(const geo::PointCloud& cloud, const ModelConfig& config,
                              const proj::PosePool& pool, Rng& rng);

/// Joint-decoder input. Block inputs are tokens + pos; `pos` is re-added
/// before every decoder block.
struct DecoderBatch {
  Tensor tokens;  // [L, C]: T^f rows then K views of I^f rows, each with its modality vector
  Tensor pos;     // [L, C]: E_p^p for point rows; E_p^i + E_v^i for image rows
  std::size_t n_points = 0;
  std::size_t tokens_per_view = 0;
  std::size_t views = 0;

  std::size_t length() const { return n_points + views * tokens_per_view; }
  Tensor input() const { return ad::add(tokens, pos); }
};

struct Reconstruction {
  Tensor points_pred;               // [M*k, 3] masked patches, center-relative
  Tensor points_gt;                 // [M*k, 3]
  std::vector<Tensor> images_pred;  // K x [H, W]
  std::vector<Tensor> images_gt;    // K x [H, W]
};

struct Diagnostics {
  double loss_3d = 0.0;
  double loss_2d = 0.0;
  double total = 0.0;
  std::size_t visible_tokens = 0;
  std::vector<std::size_t> groups_per_view;
};

struct PretrainOutput {
  Tensor loss;
  Tensor loss_3d;
  Tensor loss_2d;
  Reconstruction recon;
  Diagnostics diag;
};

/// Fixed 2-D sine/cosine table [token_h*token_w, width]; first half encodes
/// the token row, second half the column.
std::vector<double> sincos_table_2d(std::size_t token_h, std::size_t token_w, std::size_t width);

/// Symmetric l2 Chamfer distance, mean nearest squared distance per side.
Tensor chamfer_l2(const Tensor& p, const Tensor& q);
/// Mean over patches of chamfer_l2 on consecutive k-row blocks.
Tensor loss_3d(const Tensor& pred, const Tensor& gt, std::size_t k);
/// Mean over views of per-pixel MSE.
Tensor loss_2d(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt);
/// Unweighted sum; throws TrainingAbort on a non-finite term.
Tensor total_loss(const Tensor& l3d, const Tensor& l2d);

class MultiviewMae {
 public:
  MultiviewMae(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const proj::PosePool& pose_pool() const { return pool_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  /// PointNet tokens for the listed patches: [idx.size(), C].
  Tensor embed_patches(const tok::PatchSet& patches, std::span<const std::size_t> idx) const;
  Tensor position_embedding(const Tensor& centers) const { return pos3d_(centers); }
  /// Encoder over tokens [n, C]; E_p^p(centers) enters every block.
  Tensor encode(const Tensor& tokens, const Tensor& centers) const;
  /// MLP(max + mean) per non-empty group: [G, C] rows in grouping order.
  Tensor fuse_image_tokens(const Tensor& encoded, const proj::TokenGrouping& grouping) const;
  DecoderBatch assemble_decoder_input(const Tensor& encoded, const std::vector<Tensor>& fused,
                                      const std::vector<proj::TokenGrouping>& groupings,
                                      const tok::MaskPlan& mask,
                                      const std::vector<proj::CameraPose>& poses,
                                      const Tensor& all_centers) const;
  /// Returns the point segment [n, C] and one [H_t*W_t, C] segment per view.
  std::pair<Tensor, std::vector<Tensor>> joint_decode(const DecoderBatch& batch) const;
  /// [M, C] -> [M*k, 3]
  Tensor head_3d(const Tensor& masked_tokens) const;
  /// [H_t*W_t, C] -> [H_i, W_i] tiled image
  Tensor head_2d(const Tensor& image_tokens) const;

  PretrainOutput forward(const PretrainSample& sample) const;
  PretrainOutput forward_pretrain(const geo::PointCloud& cloud, Rng& rng) const;

  /// Frozen-encoder descriptor: [max-pool | mean-pool] over all unmasked patch
  /// tokens, 2C values. No depth rendering, no decoder.
  std::vector<double> encoder_features(const geo::PointCloud& cloud) const;

  /// The modality vectors [2, C]: row 0 point, row 1 image.
  Tensor modality_embeddings() const;
  Tensor pose_embedding(const proj::CameraPose& pose) const;
  const Tensor& image_pos_table() const { return image_pos_; }
  const Tensor& mask_token_point() const { return mask_point_; }
  const Tensor& mask_token_image() const { return mask_image_; }

 private:
  ModelConfig config_;
  proj::PosePool pool_;
  nn::ParameterStore store_;
  tok::PatchEmbedding embed_;
  tok::PositionEmbedding3d pos3d_;
  nn::Transformer encoder_;
  nn::Mlp fusion_;
  nn::Mlp modality_;
  nn::Mlp pose_;
  Tensor image_pos_;
  Tensor mask_point_;
  Tensor mask_image_;
  nn::Transformer decoder_;
  nn::Linear head3d_;
  nn::Linear head2d_;
  std::vector<std::size_t> tile_index_;  // pixel -> row of the flattened head output
};

}  // namespace mvmae::model
