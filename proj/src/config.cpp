// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "mvmae/error.hpp"
#include "mvmae/tokenizer.hpp"

namespace mvmae {

using nlohmann::json;

void ModelConfig::validate() const {
  grid.validate();
  proj::CameraPose{0.0, elevation_deg, radius, fov_deg}.validate();
  if (width == 0 || width % 4 != 0) throw ConfigError("model.width must be a positive multiple of 4");
  if (heads == 0 || width % heads != 0) throw ConfigError("model.heads must divide model.width");
  if (enc_depth == 0) throw ConfigError("model.enc_depth must be positive");
  if (dec_depth >= enc_depth)
    throw ConfigError("model.dec_depth must be smaller than model.enc_depth");
  if (mlp_ratio == 0) throw ConfigError("model.mlp_ratio must be positive");
  if (n_patches < 2 || n_patches > n_points)
    throw ConfigError("model.n_patches must lie in [2, n_points]");
  if (group_size == 0 || group_size > n_points)
    throw ConfigError("model.group_size must lie in [1, n_points]");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw ConfigError("model.mask_ratio must lie in (0, 1)");
  const std::size_t masked = masked_patches();
  if (masked == 0 || masked == n_patches)
    throw ConfigError("model.mask_ratio leaves an empty visible or masked patch set");
  if (pose_pool == 0) throw ConfigError("model.pose_pool must be positive");
  if (views == 0 || views > pose_pool) throw ConfigError("model.views must lie in [1, pose_pool]");
}

std::size_t ModelConfig::masked_patches() const { return tok::masked_count(n_patches, mask_ratio); }

void Config::validate() const {
  if (version != kConfigVersion)
    throw ConfigError("config version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  model.validate();
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (train.lr < 0.0 || train.lr_min < 0.0) throw ConfigError("learning rates must be non-negative");
  if (train.augmentation.scale_min <= 0.0 || train.augmentation.scale_max < train.augmentation.scale_min)
    throw ConfigError("train.scale range is invalid");
  if (data.classes.empty()) throw ConfigError("data.classes must not be empty");
  if (!(probe.train_fraction > 0.0 && probe.train_fraction < 1.0))
    throw ConfigError("probe.train_fraction must lie in (0, 1)");
}

Config desk_config() { return Config{}; }

Config paper_config() {
  Config c;
  c.model.width = 384;
  c.model.enc_depth = 12;
  c.model.dec_depth = 4;
  c.model.heads = 6;
  c.model.grid = {224, 224, 14, 14};
  c.train.lr = 2e-4;
  c.train.lr_min = 1e-6;
  c.train.warmup_steps = 0;
  c.train.adamw.weight_decay = 0.05;
  c.train.epochs = 300;
  c.train.batch_size = 128;
  return c;
}

Config tiny_config() {
  Config c;
  c.model.width = 16;
  c.model.enc_depth = 2;
  c.model.dec_depth = 1;
  c.model.heads = 2;
  c.model.n_points = 64;
  c.model.n_patches = 8;
  c.model.group_size = 4;
  c.model.grid = {16, 16, 4, 4};
  c.model.views = 2;
  c.model.pose_pool = 4;
  c.data.instances_per_class = 4;
  c.train.epochs = 1;
  c.train.batch_size = 2;
  return c;
}

json to_json(const Config& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  json j;
  j["version"] = c.version;
  j["model"] = {{"width", m.width},
                {"enc_depth", m.enc_depth},
                {"dec_depth", m.dec_depth},
                {"heads", m.heads},
                {"mlp_ratio", m.mlp_ratio},
                {"n_points", m.n_points},
                {"n_patches", m.n_patches},
                {"group_size", m.group_size},
                {"mask_ratio", m.mask_ratio},
                {"pose_pool", m.pose_pool},
                {"views", m.views},
                {"image_h", m.grid.image_h},
                {"image_w", m.grid.image_w},
                {"token_h", m.grid.token_h},
                {"token_w", m.grid.token_w},
                {"elevation_deg", m.elevation_deg},
                {"radius", m.radius},
                {"fov_deg", m.fov_deg}};
  j["train"] = {{"lr", t.lr},
                {"lr_min", t.lr_min},
                {"warmup_steps", t.warmup_steps},
                {"beta1", t.adamw.beta1},
                {"beta2", t.adamw.beta2},
                {"eps", t.adamw.eps},
                {"weight_decay", t.adamw.weight_decay},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"checkpoint_interval", t.checkpoint_interval},
                {"augment", t.augment},
                {"scale_min", t.augmentation.scale_min},
                {"scale_max", t.augmentation.scale_max}};
  j["data"] = {{"classes", c.data.classes},
               {"instances_per_class", c.data.instances_per_class},
               {"seed", c.data.seed},
               {"random_orientation", c.data.random_orientation}};
  j["probe"] = {{"lr", c.probe.lr},
                {"iterations", c.probe.iterations},
                {"weight_decay", c.probe.weight_decay},
                {"train_fraction", c.probe.train_fraction},
                {"trials", c.probe.trials},
                {"queries", c.probe.queries}};
  return j;
}

namespace {

// Reads known keys from one section and rejects anything else.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ConfigError("config section '" + name + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

Config config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Config c;
  if (!j.contains("version")) throw ConfigError("config is missing 'version'");
  c.version = j.at("version").get<int>();
  if (c.version != kConfigVersion)
    throw ConfigError("config version " + std::to_string(c.version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> top{"version", "model", "train", "data", "probe"};
    if (!top.count(key)) throw ConfigError("unknown config section '" + key + "'");
  }

  auto& m = c.model;
  Section sm(j, "model");
  sm.read("width", m.width);
  sm.read("enc_depth", m.enc_depth);
  sm.read("dec_depth", m.dec_depth);
  sm.read("heads", m.heads);
  sm.read("mlp_ratio", m.mlp_ratio);
  sm.read("n_points", m.n_points);
  sm.read("n_patches", m.n_patches);
  sm.read("group_size", m.group_size);
  sm.read("mask_ratio", m.mask_ratio);
  sm.read("pose_pool", m.pose_pool);
  sm.read("views", m.views);
  sm.read("image_h", m.grid.image_h);
  sm.read("image_w", m.grid.image_w);
  sm.read("token_h", m.grid.token_h);
  sm.read("token_w", m.grid.token_w);
  sm.read("elevation_deg", m.elevation_deg);
  sm.read("radius", m.radius);
  sm.read("fov_deg", m.fov_deg);
  sm.finish();

  auto& t = c.train;
  Section st(j, "train");
  st.read("lr", t.lr);
  st.read("lr_min", t.lr_min);
  st.read("warmup_steps", t.warmup_steps);
  st.read("beta1", t.adamw.beta1);
  st.read("beta2", t.adamw.beta2);
  st.read("eps", t.adamw.eps);
  st.read("weight_decay", t.adamw.weight_decay);
  st.read("epochs", t.epochs);
  st.read("batch_size", t.batch_size);
  st.read("checkpoint_interval", t.checkpoint_interval);
  st.read("augment", t.augment);
  st.read("scale_min", t.augmentation.scale_min);
  st.read("scale_max", t.augmentation.scale_max);
  st.finish();

  Section sd(j, "data");
  sd.read("classes", c.data.classes);
  sd.read("instances_per_class", c.data.instances_per_class);
  sd.read("seed", c.data.seed);
  sd.read("random_orientation", c.data.random_orientation);
  sd.finish();

  Section sp(j, "probe");
  sp.read("lr", c.probe.lr);
  sp.read("iterations", c.probe.iterations);
  sp.read("weight_decay", c.probe.weight_decay);
  sp.read("train_fraction", c.probe.train_fraction);
  sp.read("trials", c.probe.trials);
  sp.read("queries", c.probe.queries);
  sp.finish();

  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const Config& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(config).dump(2) << "\n";
}

std::string config_hash(const Config& config) {
  const std::string s = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mvmae
