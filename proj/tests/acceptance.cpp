// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mvmae/checkpoint.hpp"
#include "mvmae/model.hpp"
#include "mvmae/probe.hpp"
#include "mvmae/shapes.hpp"
#include "mvmae/trainer.hpp"

using namespace mvmae;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mvmae_acceptance";

// Steps of the reduced pretraining schedule used for the probe comparison.
constexpr std::uint64_t kProbePretrainSteps = 500;
// Steps of each ablation-shape run.
constexpr std::uint64_t kAblationSteps = 40;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  const auto log = kRoot / "cli_stdout.txt";
  const std::string cmd = std::string("\"") + MVMAE_CLI_PATH + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) *out = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path fresh(const std::string& name) {
  const auto d = kRoot / name;
  fs::remove_all(d);
  return d;
}

ad::Tensor random_points(std::size_t n, Rng& rng) {
  std::vector<double> v(3 * n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return ad::Tensor::from({n, 3}, v);
}

double max_abs_diff(const ad::Tensor& a, const ad::Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// ---------------------------------------------------------------- criteria

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  std::string out;
  const int code = run_cli("gradcheck --config " + q(fs::path(MVMAE_SOURCE_DIR) / "configs" / "tiny.json"), &out);
  const double s = seconds_since(t0);
  std::string worst;
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);)
    if (line.rfind("worst parameter", 0) == 0) worst = line;
  return {code == 0 && s < 60.0, fmt("exit %d in %.1f s; %s", code, s, worst.c_str())};
}

Outcome chamfer_equivalence() {
  Rng rng(2026);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const auto p = random_points(1 + rng.below(64), rng), qs = random_points(1 + rng.below(64), rng);
    auto side = [](const ad::Tensor& a, const ad::Tensor& b) {
      double s = 0;
      for (std::size_t i = 0; i < a.dim(0); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.dim(0); ++j) {
          double d = 0;
          for (std::size_t k = 0; k < 3; ++k) d += (a.at(i, k) - b.at(j, k)) * (a.at(i, k) - b.at(j, k));
          best = std::min(best, d);
        }
        s += best;
      }
      return s / static_cast<double>(a.dim(0));
    };
    worst = std::max(worst, std::abs(model::chamfer_l2(p, qs).item() - (side(p, qs) + side(qs, p))));
  }
  const double hand = model::chamfer_l2(ad::Tensor::from({1, 3}, {0, 0, 0}), ad::Tensor::from({1, 3}, {1, 0, 0})).item();
  return {worst <= 1e-12 && hand == 2.0, fmt("max |impl - brute force| %.2e over 200 pairs; hand case %.17g", worst, hand)};
}

Outcome token_index_table() {
  const proj::GridSizes g{224, 224, 14, 14};
  const bool cases = proj::token_index(0, 0, g) == 0 && proj::token_index(16, 0, g) == 14 &&
                     proj::token_index(223, 223, g) == 195;
  bool in_range = true;
  for (std::size_t r = 0; r < 224; ++r)
    for (std::size_t c = 0; c < 224; ++c) in_range = in_range && proj::token_index(r, c, g) < 196;
  // Every in-frustum projection of a dense cloud, from every pool pose.
  const auto cloud = data::generate_shape({"torus", 1.0, 0.4, 20000, 1, true});
  std::size_t projected = 0;
  for (const auto& pose : proj::make_pose_pool(12).poses)
    for (const auto& pr : proj::project_points(cloud.points, pose, 224, 224)) {
      if (!pr.in_frustum) continue;
      ++projected;
      in_range = in_range && pr.row >= 0 && pr.col >= 0 &&
                 proj::token_index(static_cast<std::size_t>(pr.row), static_cast<std::size_t>(pr.col), g) < 196;
    }
  return {cases && in_range, fmt("examples %s; 50176 pixels and %zu projected points all in [0,196)", cases ? "hold" : "FAIL", projected)};
}

Outcome mask_exactness() {
  bool ok = true;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    Rng rng(s);
    const auto m = tok::apply_mask(64, 0.75, rng);
    std::vector<std::size_t> all = m.visible;
    all.insert(all.end(), m.masked.begin(), m.masked.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(64);
    std::iota(expect.begin(), expect.end(), 0);
    ok = ok && m.masked.size() == 48 && m.visible.size() == 16 && all == expect;
  }
  return {ok, "1000 seeds: 48 masked / 16 visible, partition of {0..63}"};
}

Outcome permutation_invariance() {
  const ModelConfig cfg = desk_config().model;
  model::MultiviewMae net(cfg, 5);
  Rng rng(6);
  const auto cloud = data::generate_shape({"cube", 1.0, 1.0, 1024, 2, true});
  const auto ps = tok::build_patches(cloud, cfg.n_patches, cfg.group_size);
  std::vector<std::size_t> idx(cfg.n_patches);
  std::iota(idx.begin(), idx.end(), 0);
  const auto ref = net.embed_patches(ps, idx);
  double worst_embed = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> perm;
    for (std::size_t p = 0; p < cfg.n_patches; ++p) {
      std::vector<std::size_t> local(cfg.group_size);
      std::iota(local.begin(), local.end(), p * cfg.group_size);
      for (std::size_t i = local.size(); i > 1; --i) std::swap(local[i - 1], local[rng.below(i)]);
      perm.insert(perm.end(), local.begin(), local.end());
    }
    tok::PatchSet shuffled = ps;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.patches[i] = ps.patches[perm[i]];
    worst_embed = std::max(worst_embed, max_abs_diff(net.embed_patches(shuffled, idx), ref));
  }

  std::vector<double> e(16 * cfg.width);
  for (double& v : e) v = rng.normal();
  const auto enc = ad::Tensor::from({16, cfg.width}, e);
  double worst_fuse = 0;
  for (int t = 0; t < 100; ++t) {
    proj::TokenGrouping g;
    std::vector<std::size_t> ids(16);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 16; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    g.token = {3, 9, 20};
    g.members = {{ids.begin(), ids.begin() + 5}, {ids.begin() + 5, ids.begin() + 6}, {ids.begin() + 6, ids.end()}};
    const auto a = net.fuse_image_tokens(enc, g);
    for (auto& m : g.members) std::reverse(m.begin(), m.end()), std::rotate(m.begin(), m.begin() + m.size() / 2, m.end());
    worst_fuse = std::max(worst_fuse, max_abs_diff(net.fuse_image_tokens(enc, g), a));
  }
  return {worst_embed <= 1e-9 && worst_fuse <= 1e-9,
          fmt("max change: patch embedding %.2e, group fusion %.2e (100 trials each)", worst_embed, worst_fuse)};
}

Outcome determinism_and_resume() {
  Config c = tiny_config();
  c.train.checkpoint_interval = 2;
  const auto cfg = kRoot / "resume.json";
  save_config(cfg, c);
  const auto a = fresh("det_a"), b = fresh("det_b");
  const std::string base = "pretrain --config " + q(cfg) + " --seed 11 --out ";
  if (run_cli(base + q(a)) != 0 || run_cli(base + q(b)) != 0) return {false, "pretrain failed"};
  const std::string metrics = slurp(a / "metrics.tsv");
  bool ok = metrics == slurp(b / "metrics.tsv");
  std::size_t resumes = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_step", 0) != 0) continue;
    // Continue in a copy of the run directory truncated at this checkpoint.
    const auto r = fresh("resume_" + name);
    fs::create_directories(r);
    fs::copy_file(a / "metrics.tsv", r / "metrics.tsv");
    fs::copy_file(e.path(), r / name);
    ok = ok && run_cli(base + q(r) + " --resume " + q(r / name)) == 0;
    ok = ok && slurp(r / "metrics.tsv") == metrics && slurp(r / "final.bin") == slurp(a / "final.bin");
    ++resumes;
  }
  return {ok && resumes > 0, fmt("repeat run byte-identical; %zu resume points reproduce the tail", resumes)};
}

Outcome overfit_smoke(double* seconds) {
  Config c = desk_config();
  DataConfig d = c.data;
  d.instances_per_class = 2;
  auto set = data::make_dataset(d, c.model.n_points);
  set.resize(8);
  c.train.batch_size = 8;
  c.train.epochs = 500;
  c.train.augment = false;
  train::PretrainOptions o;
  o.out_dir = fresh("overfit");
  o.seed = 1;
  const auto t0 = Clock::now();
  const auto r = train::pretrain(c, set, o);
  *seconds = seconds_since(t0);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    head += r.records[i].total / 10;
    tail += r.records[r.records.size() - 10 + i].total / 10;
  }
  const double ratio = tail / head;
  return {r.records.size() == 500 && ratio <= 0.2 && *seconds < 600,
          fmt("mean loss steps 1-10 %.4f, steps 491-500 %.4f, ratio %.3f; %.0f s", head, tail, ratio, *seconds)};
}

Outcome pretraining_signal() {
  const Config base = desk_config();
  const auto set = data::make_dataset(base.data, base.model.n_points);
  std::ofstream report(kRoot / "probe_signal.tsv");
  report << "seed\tsteps\trandom_linear\tpretrained_linear\trandom_fewshot\tpretrained_fewshot\n";
  double gap = 0;
  std::string per_seed;
  for (std::uint64_t seed : {1, 2, 3}) {
    Config c = base;
    const std::uint64_t per_epoch = train::steps_per_epoch(set.size(), c.train.batch_size);
    c.train.epochs = static_cast<std::size_t>((kProbePretrainSteps + per_epoch - 1) / per_epoch);
    model::MultiviewMae random_net(c.model, train::model_seed(seed));
    const auto f0 = probe::extract_features(random_net, set);
    const auto r0 = probe::linear_probe(f0, c.probe, seed);
    const auto s0 = probe::few_shot_eval(f0, 5, 10, c.probe.queries, c.probe.trials, seed);

    train::PretrainOptions o;
    o.out_dir = fresh("signal_" + std::to_string(seed));
    o.seed = seed;
    o.max_steps = kProbePretrainSteps;
    const auto run = train::pretrain(c, set, o);
    const auto net = train::model_from_checkpoint(ckpt::load_checkpoint(run.final_checkpoint));
    const auto f1 = probe::extract_features(net, set);
    const auto r1 = probe::linear_probe(f1, c.probe, seed);
    const auto s1 = probe::few_shot_eval(f1, 5, 10, c.probe.queries, c.probe.trials, seed);

    report << seed << "\t" << kProbePretrainSteps << "\t" << r0.accuracy << "\t" << r1.accuracy << "\t"
           << s0.accuracy << "\t" << s1.accuracy << "\n";
    gap += (r1.accuracy - r0.accuracy) / 3;
    per_seed += fmt(" seed %d: %.3f -> %.3f;", static_cast<int>(seed), r0.accuracy, r1.accuracy);
  }
  return {gap * 100 >= 15.0, fmt("linear probe random -> pretrained (%llu steps):%s mean gain %.1f points (need 15)",
                                 static_cast<unsigned long long>(kProbePretrainSteps), per_seed.c_str(), gap * 100)};
}

Outcome ablation_shapes() {
  struct Arm {
    std::size_t k, v;
  };
  const std::vector<Arm> arms{{1, 12}, {2, 12}, {3, 12}, {3, 3}, {3, 6}};
  const Config base = desk_config();
  const auto set = data::make_dataset(base.data, base.model.n_points);
  const auto report_path = kRoot / "ablation_report.tsv";
  std::ofstream report(report_path);
  report << "K\tV\tsteps\tfirst_total\tlast_total\tlinear_probe\n";
  bool ok = true;
  for (const auto& arm : arms) {
    Config c = base;
    c.model.views = arm.k;
    c.model.pose_pool = arm.v;
    train::PretrainOptions o;
    o.out_dir = fresh(fmt("ablation_k%zu_v%zu", arm.k, arm.v));
    o.seed = 1;
    o.max_steps = kAblationSteps;
    const auto r = train::pretrain(c, set, o);
    bool finite = true;
    for (const auto& rec : r.records) finite = finite && std::isfinite(rec.total);
    const auto net = train::model_from_checkpoint(ckpt::load_checkpoint(r.final_checkpoint));
    const auto acc = probe::linear_probe(probe::extract_features(net, set), c.probe, 1).accuracy;
    report << arm.k << "\t" << arm.v << "\t" << r.records.size() << "\t" << r.records.front().total << "\t"
           << r.records.back().total << "\t" << acc << "\n";
    ok = ok && finite && r.records.size() == kAblationSteps;
  }
  return {ok, "K in {1,2,3}, V in {3,6,12}: finite losses; report at " + report_path.string()};
}

Outcome render_goldens() {
  std::ofstream(kRoot / "origin.xyz") << "0 0 0\n";
  const auto pgm = kRoot / "origin.pgm";
  bool ok = run_cli("render --input " + q(kRoot / "origin.xyz") + " --out " + q(pgm)) == 0;
  const auto img = proj::read_pgm16(pgm);
  std::size_t nonzero = 0;
  for (auto v : img.samples) nonzero += v != 0;
  const unsigned center = img.samples.empty() ? 0 : img.samples[112 * 224 + 112];
  ok = ok && nonzero == 1 && center >= 32767 && center <= 32769;

  const auto cloud = data::generate_shape({"torus", 1.0, 0.35, 4096, 3, true});
  double worst = 0;
  for (double theta : {15.0, 90.0, 200.0, -47.5}) {
    const auto rotated = geo::scale_and_rotate_z(cloud, 1.0, theta * 3.14159265358979323846 / 180);
    const auto a = proj::rasterize_depth(cloud.points, proj::CameraPose{10, 30, 2.2, 50}, 224, 224);
    const auto b = proj::rasterize_depth(rotated.points, proj::CameraPose{10 + theta, 30, 2.2, 50}, 224, 224);
    for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  }
  ok = ok && worst <= 1e-9;
  return {ok, fmt("origin pixel %u, %zu nonzero; azimuth equivariance max diff %.2e", center, nonzero, worst)};
}

}  // namespace

int main() {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  double overfit_seconds = 0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"chamfer equivalence", chamfer_equivalence},
      {"token-index table", token_index_table},
      {"mask exactness", mask_exactness},
      {"permutation invariance", permutation_invariance},
      {"determinism and resume", determinism_and_resume},
      {"overfit smoke test", [&] { return overfit_smoke(&overfit_seconds); }},
      {"pretraining signal", pretraining_signal},
      {"ablation-shape runs", ablation_shapes},
      {"render goldens", render_goldens},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
