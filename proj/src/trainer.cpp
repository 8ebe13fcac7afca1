// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

#include "mvmae/error.hpp"
#include "mvmae/optim.hpp"

namespace mvmae::train {

std::uint64_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  MVMAE_EXPECT(batch_size > 0, "steps_per_epoch: batch size must be positive");
  return (dataset_size + batch_size - 1) / batch_size;
}

std::uint64_t model_seed(std::uint64_t run_seed) { return mix_seed(run_seed, 0x6d6f64656cULL); }

std::string format_record(const StepRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%llu\t%.17g\t%.17g\t%.17g\t%.17g",
                static_cast<unsigned long long>(r.step), r.lr, r.loss_3d, r.loss_2d, r.total);
  return buf;
}

model::MultiviewMae model_from_checkpoint(const ckpt::Checkpoint& ckpt) {
  model::MultiviewMae model(ckpt.config.model, 0);
  ckpt::restore_parameters(ckpt, model);
  return model;
}

namespace {

// Epoch order depends only on (seed, epoch) so a resumed run sees the same batches.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x5348554646ULL, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

// Drops rows logged after `step` so a run resumed in place never duplicates steps.
void truncate_metrics(const std::filesystem::path& path, std::uint64_t step) {
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("step\t", 0) == 0 || std::stoull(line.substr(0, line.find('\t'))) <= step)
      kept += line + "\n";
  }
  in.close();
  std::ofstream(path, std::ios::trunc) << kept;
}

}  // namespace

PretrainResult pretrain(const Config& config, const std::vector<geo::PointCloud>& dataset,
                        const PretrainOptions& options) {
  config.validate();
  MVMAE_EXPECT(!dataset.empty(), "pretrain: empty dataset");
  const auto& tc = config.train;
  const std::uint64_t per_epoch = steps_per_epoch(dataset.size(), tc.batch_size);
  const std::uint64_t total_steps = per_epoch * tc.epochs;
  MVMAE_EXPECT(total_steps > 0, "pretrain: zero-length run (epochs = 0)");

  model::MultiviewMae model(config.model, model_seed(options.seed));
  optim::OptimState optim = optim::make_state(model.params().all(), tc.adamw);
  Rng run_rng(options.seed);
  std::uint64_t step = 0;

  if (options.resume) {
    const ckpt::Checkpoint c = ckpt::load_checkpoint(*options.resume);
    if (to_json(c.config) != to_json(config))
      throw ConfigError("resume checkpoint was written under a different config");
    ckpt::restore_parameters(c, model);
    optim = c.optim;
    optim.hyper = tc.adamw;
    step = c.step;
    run_rng.restore(c.rng_state);
  }

  std::filesystem::create_directories(options.out_dir);
  const auto metrics_path = options.out_dir / "metrics.tsv";
  if (options.resume && std::filesystem::exists(metrics_path)) truncate_metrics(metrics_path, step);
  const bool fresh_metrics = !std::filesystem::exists(metrics_path);
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw ConfigError("cannot open " + metrics_path.string());
  if (fresh_metrics) metrics << kMetricsHeader << "\n";

  auto write_checkpoint = [&](const std::filesystem::path& path) {
    ckpt::save_checkpoint(ckpt::capture(config, model, optim, step, run_rng), path);
  };

  PretrainResult result;
  result.total_steps = total_steps;
  const std::uint64_t stop =
      options.max_steps ? std::min(total_steps, step + *options.max_steps) : total_steps;

  while (step < stop) {
    const std::uint64_t epoch = step / per_epoch;
    const std::uint64_t in_epoch = step % per_epoch;
    const auto order = epoch_order(dataset.size(), options.seed, epoch);
    const std::size_t begin = static_cast<std::size_t>(in_epoch * tc.batch_size);
    const std::size_t end = std::min(dataset.size(), begin + tc.batch_size);
    const std::uint64_t step_seed = run_rng.next_u64();

    model.params().zero_grad();
    StepRecord rec;
    rec.step = step + 1;
    rec.lr = optim::cosine_lr(step, total_steps, tc.lr, tc.lr_min, tc.warmup_steps);
    const double weight = 1.0 / static_cast<double>(end - begin);
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t item = order[b];
      Rng item_rng(derive_seed(step_seed, item, epoch));
      const geo::PointCloud cloud =
          tc.augment ? geo::augment(dataset[item], item_rng, tc.augmentation) : dataset[item];
      model::PretrainOutput out;
      try {
        out = model.forward_pretrain(cloud, item_rng);
      } catch (const TrainingAbort& e) {
        throw TrainingAbort(std::string(e.what()) + " at step " + std::to_string(rec.step),
                            static_cast<long long>(rec.step));
      }
      ad::backward(ad::scale(out.loss, weight));
      rec.loss_3d += weight * out.diag.loss_3d;
      rec.loss_2d += weight * out.diag.loss_2d;
      rec.total += weight * out.diag.total;
    }
    optim::adamw_step(model.params().all(), optim, rec.lr);
    ++step;

    metrics << format_record(rec) << "\n";
    metrics.flush();
    if (!options.quiet && (step % 10 == 0 || step == 1)) std::cerr << format_record(rec) << "\n";
    result.records.push_back(rec);

    if (tc.checkpoint_interval > 0 && step % tc.checkpoint_interval == 0 && step < total_steps)
      write_checkpoint(options.out_dir / ("ckpt_step" + std::to_string(step) + ".bin"));
  }

  result.steps_completed = step;
  result.final_checkpoint = options.out_dir / (step == total_steps ? "final.bin"
                                                                   : "ckpt_step" + std::to_string(step) + ".bin");
  write_checkpoint(result.final_checkpoint);
  return result;
}

}  // namespace mvmae::train
