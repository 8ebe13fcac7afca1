// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: pretrain, render, reconstruct, probe, gradcheck.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvmae/checkpoint.hpp"
#include "mvmae/config.hpp"
#include "mvmae/error.hpp"
#include "mvmae/gradcheck.hpp"
#include "mvmae/probe.hpp"
#include "mvmae/projection.hpp"
#include "mvmae/shapes.hpp"
#include "mvmae/tensor.hpp"
#include "mvmae/trainer.hpp"
#include "mvmae/version.hpp"

namespace fs = std::filesystem;
using namespace mvmae;

using geo::operator+;

namespace {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kNanAbort = 3, kInternal = 4 };

constexpr const char* kManifestName = "manifest.json";

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// RunManifest: written before work starts, finalized with end time and exit code.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command, std::string config_path, const Config& config,
           std::uint64_t seed)
      : path_(std::move(dir) / kManifestName) {
    doc_["command"] = std::move(command);
    doc_["config_path"] = std::move(config_path);
    doc_["config_hash"] = config_hash(config);
    doc_["seed"] = seed;
    doc_["tool_version"] = kVersion;
    doc_["output_dir"] = path_.parent_path().string();
    doc_["start"] = utc_now();
    doc_["end"] = nullptr;
    doc_["exit_code"] = nullptr;
    doc_["status"] = "running";
    write();
  }
  ~Manifest() {
    if (!finished_) {
      doc_["end"] = utc_now();
      doc_["status"] = "failed";
      write();
    }
  }
  Manifest(const Manifest&) = delete;
  Manifest& operator=(const Manifest&) = delete;

  void finish(int code) {
    doc_["end"] = utc_now();
    doc_["exit_code"] = code;
    doc_["status"] = code == 0 ? "ok" : "failed";
    finished_ = true;
    write();
  }

 private:
  void write() const { std::ofstream(path_) << doc_.dump(2) << "\n"; }
  fs::path path_;
  nlohmann::json doc_;
  bool finished_ = false;
};

// Refuses to reuse a directory that already holds a run manifest.
void claim_output_dir(const fs::path& dir, bool force, bool resuming_in_place) {
  if (fs::exists(dir / kManifestName) && !force && !resuming_in_place)
    throw ConfigError("output directory " + dir.string() +
                      " already contains a run manifest; pass --force to overwrite");
  fs::create_directories(dir);
}

Config load_config_or_default(const std::string& path, const Config& fallback) {
  if (path.empty()) return fallback;
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return load_config(path);
}

proj::CameraPose parse_pose(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("--pose: cannot parse '" + item + "' as a number");
    }
  }
  if (v.size() != 4) throw ConfigError("--pose expects \"az,el,r,fov\"");
  proj::CameraPose pose{v[0], v[1], v[2], v[3]};
  try {
    pose.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("--pose: ") + e.what());
  }
  return pose;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument("no separator");
    const auto h = std::stoul(text.substr(0, x));
    const auto w = std::stoul(text.substr(x + 1));
    if (h == 0 || w == 0) throw std::invalid_argument("zero extent");
    return {h, w};
  } catch (const std::exception&) {
    throw ConfigError("--size expects HxW with positive integers, got '" + text + "'");
  }
}

geo::PointCloud read_input(const std::string& path) {
  try {
    return geo::read_cloud(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read point cloud " + path + ": " + e.what());
  }
}

ckpt::Checkpoint read_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  return ckpt::load_checkpoint(path);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  std::string config, out, resume;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> max_steps;
  bool force = false, verbose = false;
};

int cmd_pretrain(const PretrainArgs& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  Config config = load_config_or_default(a.config, desk_config());
  if (a.epochs) config.train.epochs = *a.epochs;
  config.validate();

  const fs::path out(a.out);
  bool in_place = false;
  if (!a.resume.empty()) {
    if (!fs::exists(a.resume)) throw ConfigError("checkpoint not found: " + a.resume);
    in_place = fs::weakly_canonical(fs::path(a.resume).parent_path()) == fs::weakly_canonical(out);
  }
  claim_output_dir(out, a.force, in_place);
  if (!in_place && a.force) fs::remove(out / "metrics.tsv");

  Manifest manifest(out, "pretrain", a.config, config, a.seed);
  const auto dataset = data::make_dataset(config.data, config.model.n_points);
  train::PretrainOptions opt;
  opt.out_dir = out;
  opt.seed = a.seed;
  opt.max_steps = a.max_steps;
  opt.quiet = !a.verbose;
  if (!a.resume.empty()) opt.resume = fs::path(a.resume);
  try {
    const auto result = train::pretrain(config, dataset, opt);
    std::cout << "steps " << result.steps_completed << "/" << result.total_steps << ", checkpoint "
              << result.final_checkpoint.string() << "\n";
  } catch (const TrainingAbort& e) {
    manifest.finish(kNanAbort);
    std::cerr << "error: " << e.what() << "\n";
    return kNanAbort;
  }
  manifest.finish(kOk);
  return kOk;
}

// ------------------------------------------------------------------ render

int cmd_render(const std::string& input, const std::string& pose_text, const std::string& size,
               const std::string& out) {
  const geo::PointCloud cloud = read_input(input);
  const proj::CameraPose pose = parse_pose(pose_text);
  const auto [h, w] = parse_size(size);
  const proj::DepthMap map = proj::rasterize_depth(cloud.points, pose, h, w);
  proj::write_pgm16(out, map);
  return kOk;
}

// ------------------------------------------------------------- reconstruct

struct ReconstructArgs {
  std::string checkpoint, input, config, out;
  std::size_t views = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

int cmd_reconstruct(const ReconstructArgs& a) {
  const ckpt::Checkpoint c = read_checkpoint(a.checkpoint);
  Config config = c.config;
  if (!a.config.empty()) {
    const Config requested = load_config_or_default(a.config, c.config);
    if (to_json(requested)["model"] != to_json(c.config)["model"])
      throw ConfigError("model section of " + a.config + " does not match checkpoint " +
                        a.checkpoint);
  }
  if (a.views > 0) config.model.views = a.views;
  config.validate();

  model::MultiviewMae net(config.model, 0);
  ckpt::restore_parameters(c, net);
  geo::PointCloud cloud = geo::normalize_unit_sphere(read_input(a.input));
  if (cloud.points.size() < config.model.n_points)
    throw ConfigError("input has " + std::to_string(cloud.points.size()) + " points, model needs " +
                      std::to_string(config.model.n_points));
  std::vector<geo::Vec3> sampled;
  for (auto i : geo::farthest_point_sampling(cloud.points, config.model.n_points))
    sampled.push_back(cloud.points[i]);
  cloud.points = std::move(sampled);

  const fs::path out(a.out);
  claim_output_dir(out, a.force, false);
  Manifest manifest(out, "reconstruct", a.config.empty() ? a.checkpoint : a.config, config, a.seed);

  Rng rng(a.seed);
  const model::PretrainSample sample = model::prepare_sample(cloud, config.model, net.pose_pool(), rng);
  model::PretrainOutput result;
  {
    ad::NoGradGuard guard;
    result = net.forward(sample);
  }

  const std::size_t k = config.model.group_size;
  std::vector<geo::Vec3> masked_input, reconstructed;
  for (auto i : sample.mask.visible)
    for (const auto& p : sample.patches.patch(i)) masked_input.push_back(p + sample.patches.centers[i]);
  const auto pred = result.recon.points_pred.data();
  for (std::size_t m = 0; m < sample.mask.masked.size(); ++m) {
    const auto& center = sample.patches.centers[sample.mask.masked[m]];
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = (m * k + j) * 3;
      reconstructed.push_back({pred[r] + center[0], pred[r + 1] + center[1], pred[r + 2] + center[2]});
    }
  }
  geo::write_xyz(out / "masked_input.xyz", masked_input);
  geo::write_xyz(out / "reconstructed_patches.xyz", reconstructed);
  const auto& grid = config.model.grid;
  for (std::size_t v = 0; v < sample.poses.size(); ++v) {
    const std::string stem = "view" + std::to_string(v);
    proj::write_pgm16(out / (stem + "_gt.pgm"), sample.targets[v]);
    proj::write_pgm16(out / (stem + "_pred.pgm"), grid.image_h, grid.image_w,
                      result.recon.images_pred[v].data());
  }
  std::cout << "loss_3d " << result.diag.loss_3d << " loss_2d " << result.diag.loss_2d << "\n";
  manifest.finish(kOk);
  return kOk;
}

// ------------------------------------------------------------------- probe

struct ProbeArgs {
  std::string checkpoint, mode = "linear";
  std::size_t n_way = 5, m_shot = 10;
  std::optional<std::size_t> trials;
  std::uint64_t seed = 0;
  bool random_init = false;
};

int cmd_probe(const ProbeArgs& a) {
  const ckpt::Checkpoint c = read_checkpoint(a.checkpoint);
  const Config& config = c.config;
  model::MultiviewMae net(config.model, train::model_seed(a.seed));
  if (!a.random_init) ckpt::restore_parameters(c, net);

  const std::uint64_t before = ckpt::parameter_hash(net.params());
  const auto dataset = data::make_dataset(config.data, config.model.n_points);
  const probe::FeatureSet features = probe::extract_features(net, dataset);
  probe::ProbeReport report;
  try {
    if (a.mode == "linear") {
      report = probe::linear_probe(features, config.probe, a.seed);
    } else if (a.mode == "fewshot") {
      report = probe::few_shot_eval(features, a.n_way, a.m_shot, config.probe.queries,
                                    a.trials.value_or(config.probe.trials), a.seed);
    } else {
      throw ConfigError("--mode must be linear or fewshot");
    }
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  const std::uint64_t after = ckpt::parameter_hash(net.params());
  if (before != after) throw std::logic_error("probe modified encoder parameters");

  nlohmann::json j = probe::to_json(report);
  j["encoder"] = a.random_init ? "random-init" : "pretrained";
  j["parameter_hash"] = hex64(after);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::string config, corrupt_op;
  double corrupt_factor = 1.5;
  std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const Config config = load_config_or_default(a.config, tiny_config());
  config.validate();
  const Config tiny = tiny_config();
  if (to_json(config)["model"] != to_json(tiny)["model"]) {
    const model::MultiviewMae probe_net(config.model, 0);
    std::cerr << "warning: config is not the tiny gradient-check preset; checking "
              << probe_net.params().total_elements()
              << " parameter elements with two forward passes each may take a long time\n";
  }
  if (!a.corrupt_op.empty()) ad::set_gradient_fault(a.corrupt_op, a.corrupt_factor);

  bool ok = true;
  for (const auto& r : gc::check_ops(a.seed)) {
    if (!r.passed()) {
      ok = false;
      std::printf("FAIL op %s: max relative error %.3e (analytic %.9g, numeric %.9g)\n", r.name.c_str(),
                  r.max_rel_error, r.worst_analytic, r.worst_numeric);
    }
  }
  const gc::ModelCheckReport report = gc::check_model(config.model, a.seed);
  ad::set_gradient_fault("", 1.0);
  const gc::CheckResult& worst = report.worst();
  std::printf("checked %zu parameter elements across %zu tensors, loss %.9g\n", report.elements,
              report.params.size(), report.loss);
  std::printf("worst parameter %s[%zu]: relative error %.3e (analytic %.9g, numeric %.9g)\n",
              worst.name.c_str(), worst.worst_index, worst.max_rel_error, worst.worst_analytic,
              worst.worst_numeric);
  ok = ok && report.passed();
  std::printf("%s (tolerance %.0e)\n", ok ? "PASS" : "FAIL", gc::kTolerance);
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiview masked autoencoder for point clouds"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  PretrainArgs pa;
  auto* pre = app.add_subcommand("pretrain", "Pretrain on the synthetic shape corpus");
  pre->add_option("--config", pa.config, "JSON config file")->required();
  pre->add_option("--out", pa.out, "Output directory")->required();
  pre->add_option("--seed", pa.seed, "Run seed");
  pre->add_option("--epochs", pa.epochs, "Override the configured epoch count");
  pre->add_option("--resume", pa.resume, "Resume from a checkpoint");
  pre->add_option("--max-steps", pa.max_steps, "Stop after this many updates in this invocation");
  pre->add_flag("--force", pa.force, "Overwrite an existing run directory");
  pre->add_flag("--verbose", pa.verbose, "Print losses to stderr");

  std::string r_input, r_pose = "0,30,2.2,50", r_size = "224x224", r_out;
  auto* ren = app.add_subcommand("render", "Render a 16-bit PGM depth map");
  ren->add_option("--input", r_input, "XYZ or OFF point cloud")->required();
  ren->add_option("--pose", r_pose, "Camera \"az,el,r,fov\" (degrees, radius, degrees)");
  ren->add_option("--size", r_size, "Image size HxW");
  ren->add_option("--out", r_out, "Output PGM")->required();

  ReconstructArgs ra;
  auto* rec = app.add_subcommand("reconstruct", "Dump masked input, reconstruction and depth views");
  rec->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
  rec->add_option("--input", ra.input, "XYZ or OFF point cloud")->required();
  rec->add_option("--config", ra.config, "Config that must match the checkpoint's model");
  rec->add_option("--views", ra.views, "Views to reconstruct (default: configured K)");
  rec->add_option("--out", ra.out, "Output directory")->required();
  rec->add_option("--seed", ra.seed, "Seed for masking and view selection");
  rec->add_flag("--force", ra.force, "Overwrite an existing run directory");

  ProbeArgs pr;
  auto* prb = app.add_subcommand("probe", "Frozen-encoder linear or few-shot evaluation");
  prb->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  prb->add_option("--mode", pr.mode, "linear or fewshot")->check(CLI::IsMember({"linear", "fewshot"}));
  prb->add_option("--n-way", pr.n_way, "Classes per few-shot trial");
  prb->add_option("--m-shot", pr.m_shot, "Support instances per class");
  prb->add_option("--trials", pr.trials, "Few-shot trials (default from config)");
  prb->add_option("--seed", pr.seed, "Split seed");
  prb->add_flag("--random-init", pr.random_init, "Evaluate a freshly initialized encoder instead");

  GradcheckArgs ga;
  auto* gck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gck->add_option("--config", ga.config, "JSON config (default: tiny preset)");
  gck->add_option("--seed", ga.seed, "Seed for weights and the checked sample");
  gck->add_option("--corrupt-op", ga.corrupt_op)->group("");
  gck->add_option("--corrupt-factor", ga.corrupt_factor)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*pre) return cmd_pretrain(pa);
    if (*ren) return cmd_render(r_input, r_pose, r_size, r_out);
    if (*rec) return cmd_reconstruct(ra);
    if (*prb) return cmd_probe(pr);
    if (*gck) return cmd_gradcheck(ga);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const TrainingAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNanAbort;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
