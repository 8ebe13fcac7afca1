// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/model.hpp"

#include <cmath>
#include <numeric>

#include "mvmae/error.hpp"

namespace mvmae::model {

PretrainSample prepare_sample(const geo::PointCloud& cloud, const ModelConfig& config,
                              const proj::PosePool& pool, Rng& rng) {
  MVMAE_EXPECT(config.views <= pool.size(), "prepare_sample: more views requested than the pool holds");
  PretrainSample s;
  s.patches = tok::build_patches(cloud, config.n_patches, config.group_size);
  s.mask = tok::apply_mask(config.n_patches, config.mask_ratio, rng);

  std::vector<std::size_t> ids(pool.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < config.views; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  s.view_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(config.views));
  for (std::size_t id : s.view_ids) {
    s.poses.push_back(pool.poses[id]);
    s.targets.push_back(
        proj::rasterize_depth(cloud.points, pool.poses[id], config.grid.image_h, config.grid.image_w));
  }
  return s;
}

std::vector<double> sincos_table_2d(std::size_t token_h, std::size_t token_w, std::size_t width) {
  MVMAE_EXPECT(width % 4 == 0, "sincos_table_2d: width must be a multiple of 4");
  const std::size_t quarter = width / 4;
  std::vector<double> table(token_h * token_w * width);
  for (std::size_t r = 0; r < token_h; ++r) {
    for (std::size_t c = 0; c < token_w; ++c) {
      double* row = table.data() + (r * token_w + c) * width;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double omega =
            1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
        row[i] = std::sin(static_cast<double>(r) * omega);
        row[quarter + i] = std::cos(static_cast<double>(r) * omega);
        row[2 * quarter + i] = std::sin(static_cast<double>(c) * omega);
        row[3 * quarter + i] = std::cos(static_cast<double>(c) * omega);
      }
    }
  }
  return table;
}

namespace {

std::vector<std::size_t> nearest_rows(const Tensor& from, const Tensor& to) {
  const std::size_t a = from.dim(0), b = to.dim(0);
  const double* f = from.data().data();
  const double* t = to.data().data();
  std::vector<std::size_t> nn(a, 0);
  for (std::size_t i = 0; i < a; ++i) {
    double best = INFINITY;
    for (std::size_t j = 0; j < b; ++j) {
      const double dx = f[3 * i] - t[3 * j], dy = f[3 * i + 1] - t[3 * j + 1],
                   dz = f[3 * i + 2] - t[3 * j + 2];
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best) {
        best = d;
        nn[i] = j;
      }
    }
  }
  return nn;
}

Tensor mean_nearest_sq(const Tensor& from, const Tensor& to) {
  const Tensor diff = ad::sub(from, ad::gather_rows(to, nearest_rows(from, to)));
  return ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(from.dim(0)));
}

}  // namespace

Tensor chamfer_l2(const Tensor& p, const Tensor& q) {
  MVMAE_EXPECT(p.rank() == 2 && q.rank() == 2 && p.dim(1) == 3 && q.dim(1) == 3,
               "chamfer_l2: expected [*, 3] point sets");
  MVMAE_EXPECT(p.dim(0) > 0 && q.dim(0) > 0, "chamfer_l2: empty point set");
  return ad::add(mean_nearest_sq(p, q), mean_nearest_sq(q, p));
}

Tensor loss_3d(const Tensor& pred, const Tensor& gt, std::size_t k) {
  MVMAE_EXPECT(pred.shape() == gt.shape(), "loss_3d: prediction and target shapes differ");
  MVMAE_EXPECT(k > 0 && pred.dim(0) % k == 0, "loss_3d: rows are not a whole number of patches");
  const std::size_t patches = pred.dim(0) / k;
  MVMAE_EXPECT(patches > 0, "loss_3d: no masked patches");
  std::vector<Tensor> per_patch;
  per_patch.reserve(patches);
  Tensor acc;
  for (std::size_t i = 0; i < patches; ++i) {
    const Tensor c = chamfer_l2(ad::slice(pred, 0, i * k, k), ad::slice(gt, 0, i * k, k));
    acc = acc.defined() ? ad::add(acc, c) : c;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(patches));
}

Tensor loss_2d(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt) {
  MVMAE_EXPECT(!pred.empty() && pred.size() == gt.size(), "loss_2d: view count mismatch");
  Tensor acc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Tensor e = ad::mse(pred[i], gt[i]);
    acc = acc.defined() ? ad::add(acc, e) : e;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(pred.size()));
}

Tensor total_loss(const Tensor& l3d, const Tensor& l2d) {
  if (!std::isfinite(l3d.item()) || !std::isfinite(l2d.item()))
    throw TrainingAbort("non-finite loss term (L3D=" + std::to_string(l3d.item()) +
                            ", L2D=" + std::to_string(l2d.item()) + ")",
                        -1);
  return ad::add(l3d, l2d);
}

MultiviewMae::MultiviewMae(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  pool_ = proj::make_pose_pool(config_.pose_pool, config_.elevation_deg, config_.radius,
                               config_.fov_deg);
  Rng rng(seed);
  const std::size_t c = config_.width;
  const auto& g = config_.grid;

  embed_ = tok::PatchEmbedding(store_, "patch_embed", c, rng);
  pos3d_ = tok::PositionEmbedding3d(store_, "pos_embed_3d", c, rng);
  encoder_ = nn::Transformer(store_, "encoder", config_.enc_depth, c, config_.heads,
                             config_.mlp_ratio, rng);
  fusion_ = nn::Mlp(store_, "fusion", c, c, c, rng);
  modality_ = nn::Mlp(store_, "modality_embed", 2, c, c, rng);
  pose_ = nn::Mlp(store_, "pose_embed", 5, c, c, rng);
  image_pos_ = store_.create("image_pos_table", {g.tokens(), c},
                             sincos_table_2d(g.token_h, g.token_w, c), /*trainable=*/false);
  mask_point_ = store_.create("mask_token_point", {1, c}, nn::normal_init(c, 0.02, rng));
  mask_image_ = store_.create("mask_token_image", {1, c}, nn::normal_init(c, 0.02, rng));
  decoder_ = nn::Transformer(store_, "decoder", config_.dec_depth, c, config_.heads,
                             config_.mlp_ratio, rng);
  head3d_ = nn::Linear(store_, "head_3d", c, 3 * config_.group_size, rng, nn::LinearInit::kFanIn);
  head2d_ = nn::Linear(store_, "head_2d", c, g.pixels_per_token(), rng, nn::LinearInit::kFanIn);

  // Pixel (r, col) comes from token (r/ph)*Wt + col/pw at in-token offset (r%ph)*pw + col%pw.
  const std::size_t ph = g.patch_h(), pw = g.patch_w(), ppt = g.pixels_per_token();
  tile_index_.resize(g.image_h * g.image_w);
  for (std::size_t r = 0; r < g.image_h; ++r)
    for (std::size_t col = 0; col < g.image_w; ++col)
      tile_index_[r * g.image_w + col] =
          ((r / ph) * g.token_w + col / pw) * ppt + (r % ph) * pw + col % pw;
}

Tensor MultiviewMae::embed_patches(const tok::PatchSet& patches,
                                   std::span<const std::size_t> idx) const {
  return embed_(tok::patch_points(patches, idx), patches.k);
}

Tensor MultiviewMae::encode(const Tensor& tokens, const Tensor& centers) const {
  MVMAE_EXPECT(tokens.rank() == 2 && tokens.dim(1) == config_.width, "encode: tokens must be [n, C]");
  MVMAE_EXPECT(centers.dim(0) == tokens.dim(0), "encode: one center per token required");
  return encoder_(tokens, pos3d_(centers));
}

Tensor MultiviewMae::fuse_image_tokens(const Tensor& encoded,
                                       const proj::TokenGrouping& grouping) const {
  MVMAE_EXPECT(grouping.size() > 0, "fuse_image_tokens: empty grouping");
  return fusion_(ad::add(ad::group_max(encoded, grouping.members),
                         ad::group_mean(encoded, grouping.members)));
}

Tensor MultiviewMae::modality_embeddings() const {
  return modality_(Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0}));
}

Tensor MultiviewMae::pose_embedding(const proj::CameraPose& pose) const {
  const auto f = pose.feature();
  return pose_(Tensor::from({1, 5}, std::vector<double>(f.begin(), f.end())));
}

DecoderBatch MultiviewMae::assemble_decoder_input(const Tensor& encoded,
                                                  const std::vector<Tensor>& fused,
                                                  const std::vector<proj::TokenGrouping>& groupings,
                                                  const tok::MaskPlan& mask,
                                                  const std::vector<proj::CameraPose>& poses,
                                                  const Tensor& all_centers) const {
  const std::size_t n = mask.visible.size() + mask.masked.size();
  const std::size_t views = poses.size();
  const std::size_t t = config_.grid.tokens();
  MVMAE_EXPECT(views <= config_.pose_pool, "assemble_decoder_input: more views than the pose pool");
  MVMAE_EXPECT(fused.size() == views && groupings.size() == views,
               "assemble_decoder_input: one fused tensor and grouping per view required");
  MVMAE_EXPECT(encoded.dim(0) == mask.visible.size(), "assemble_decoder_input: token/mask mismatch");
  MVMAE_EXPECT(all_centers.dim(0) == n, "assemble_decoder_input: one center per patch required");

  // T^f: encoded tokens at visible slots, the point mask token elsewhere.
  Tensor point_slots = ad::scatter_rows(encoded, mask.visible, n);
  if (!mask.masked.empty()) {
    const std::vector<std::size_t> zeros(mask.masked.size(), 0);
    point_slots = ad::add(point_slots,
                          ad::scatter_rows(ad::gather_rows(mask_point_, zeros), mask.masked, n));
  }

  std::vector<Tensor> token_parts{point_slots};
  std::vector<Tensor> pos_parts{pos3d_(all_centers)};
  for (std::size_t v = 0; v < views; ++v) {
    const auto& grouping = groupings[v];
    std::vector<char> filled(t, 0);
    for (std::size_t tok_id : grouping.token) filled[tok_id] = 1;
    std::vector<std::size_t> empty;
    for (std::size_t i = 0; i < t; ++i)
      if (!filled[i]) empty.push_back(i);

    // I^f: fused features at grouped cells, the image mask token elsewhere.
    Tensor image_slots;
    if (grouping.size() > 0) image_slots = ad::scatter_rows(fused[v], grouping.token, t);
    if (!empty.empty()) {
      const std::vector<std::size_t> zeros(empty.size(), 0);
      const Tensor pad = ad::scatter_rows(ad::gather_rows(mask_image_, zeros), empty, t);
      image_slots = image_slots.defined() ? ad::add(image_slots, pad) : pad;
    }
    token_parts.push_back(image_slots);

    const std::vector<std::size_t> zeros(t, 0);
    pos_parts.push_back(ad::add(image_pos_, ad::gather_rows(pose_embedding(poses[v]), zeros)));
  }

  std::vector<std::size_t> modality_rows(n, 0);
  modality_rows.resize(n + views * t, 1);

  DecoderBatch batch;
  batch.n_points = n;
  batch.tokens_per_view = t;
  batch.views = views;
  batch.tokens = ad::add(ad::concat(token_parts, 0),
                         ad::gather_rows(modality_embeddings(), modality_rows));
  batch.pos = ad::concat(pos_parts, 0);
  return batch;
}

std::pair<Tensor, std::vector<Tensor>> MultiviewMae::joint_decode(const DecoderBatch& batch) const {
  const Tensor out = decoder_(batch.tokens, batch.pos);
  Tensor points = ad::slice(out, 0, 0, batch.n_points);
  std::vector<Tensor> images;
  images.reserve(batch.views);
  for (std::size_t v = 0; v < batch.views; ++v)
    images.push_back(ad::slice(out, 0, batch.n_points + v * batch.tokens_per_view,
                               batch.tokens_per_view));
  return {points, images};
}

Tensor MultiviewMae::head_3d(const Tensor& masked_tokens) const {
  return ad::reshape(head3d_(masked_tokens), {masked_tokens.dim(0) * config_.group_size, 3});
}

Tensor MultiviewMae::head_2d(const Tensor& image_tokens) const {
  const auto& g = config_.grid;
  const Tensor flat = ad::reshape(head2d_(image_tokens), {g.tokens() * g.pixels_per_token(), 1});
  return ad::reshape(ad::gather_rows(flat, tile_index_), {g.image_h, g.image_w});
}

PretrainOutput MultiviewMae::forward(const PretrainSample& s) const {
  const auto& g = config_.grid;
  const Tensor visible_centers = tok::center_points(s.patches, s.mask.visible);
  std::vector<std::size_t> all(s.patches.n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor all_centers = tok::center_points(s.patches, all);

  // The encoder only ever sees visible patches.
  const Tensor encoded = encode(embed_patches(s.patches, s.mask.visible), visible_centers);

  std::vector<proj::Vec3> vis_centers;
  for (std::size_t i : s.mask.visible) vis_centers.push_back(s.patches.centers[i]);

  PretrainOutput out;
  out.diag.visible_tokens = s.mask.visible.size();
  std::vector<proj::TokenGrouping> groupings;
  std::vector<Tensor> fused;
  for (const auto& pose : s.poses) {
    groupings.push_back(proj::group_by_image_token(vis_centers, pose, g));
    fused.push_back(groupings.back().size() > 0 ? fuse_image_tokens(encoded, groupings.back())
                                                : Tensor());
    out.diag.groups_per_view.push_back(groupings.back().size());
  }

  const DecoderBatch batch =
      assemble_decoder_input(encoded, fused, groupings, s.mask, s.poses, all_centers);
  const auto [points_dec, images_dec] = joint_decode(batch);

  auto& r = out.recon;
  r.points_pred = head_3d(ad::gather_rows(points_dec, s.mask.masked));
  r.points_gt = tok::patch_points(s.patches, s.mask.masked);
  for (std::size_t v = 0; v < s.poses.size(); ++v) {
    r.images_pred.push_back(head_2d(images_dec[v]));
    r.images_gt.push_back(Tensor::from({g.image_h, g.image_w}, s.targets[v].values));
  }

  out.loss_3d = loss_3d(r.points_pred, r.points_gt, config_.group_size);
  out.loss_2d = loss_2d(r.images_pred, r.images_gt);
  out.loss = total_loss(out.loss_3d, out.loss_2d);
  out.diag.loss_3d = out.loss_3d.item();
  out.diag.loss_2d = out.loss_2d.item();
  out.diag.total = out.loss.item();
  return out;
}

PretrainOutput MultiviewMae::forward_pretrain(const geo::PointCloud& cloud, Rng& rng) const {
  return forward(prepare_sample(cloud, config_, pool_, rng));
}

std::vector<double> MultiviewMae::encoder_features(const geo::PointCloud& cloud) const {
  ad::NoGradGuard no_grad;
  const tok::PatchSet patches = tok::build_patches(cloud, config_.n_patches, config_.group_size);
  std::vector<std::size_t> all(patches.n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Tensor encoded = encode(embed_patches(patches, all), tok::center_points(patches, all));
  const ad::Groups everything{all};
  const Tensor mx = ad::group_max(encoded, everything);
  const Tensor mn = ad::group_mean(encoded, everything);
  std::vector<double> features(mx.data().begin(), mx.data().end());
  features.insert(features.end(), mn.data().begin(), mn.data().end());
  return features;
}

}  // namespace mvmae::model
