// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>

#include "mvmae/config.hpp"
#include "mvmae/geometry.hpp"
#include "mvmae/shapes.hpp"

using namespace mvmae;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mvmae_cli_test";
const bool kRootReady = (fs::remove_all(kRoot), fs::create_directories(kRoot));

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run run(const std::string& args) {
  const auto out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string("\"") + MVMAE_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh(const std::string& name) {
  const auto d = kRoot / name;
  fs::remove_all(d);
  return d;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path tiny_json() { return fs::path(MVMAE_SOURCE_DIR) / "configs" / "tiny.json"; }

// Parses a 16-bit PGM written by the tool.
struct Pgm {
  std::size_t h = 0, w = 0;
  std::vector<unsigned> px;
};
Pgm read_pgm(const fs::path& p) {
  const std::string b = slurp(p);
  Pgm g;
  std::size_t maxval = 0;
  char magic[3] = {};
  int consumed = 0;
  REQUIRE(std::sscanf(b.c_str(), "%2s %zu %zu %zu%n", magic, &g.w, &g.h, &maxval, &consumed) == 4);
  REQUIRE(std::string(magic) == "P5");
  REQUIRE(maxval == 65535);
  const std::size_t off = static_cast<std::size_t>(consumed) + 1;
  REQUIRE(b.size() == off + 2 * g.w * g.h);
  for (std::size_t i = 0; i < g.w * g.h; ++i)
    g.px.push_back((static_cast<unsigned char>(b[off + 2 * i]) << 8) | static_cast<unsigned char>(b[off + 2 * i + 1]));
  return g;
}

fs::path write_cloud(const std::string& name, std::size_t n, std::uint64_t seed) {
  const auto p = kRoot / name;
  geo::write_xyz(p, data::generate_shape({"torus", 1.0, 0.3, n, seed, false}).points);
  return p;
}

// Shared small pretrained checkpoint.
const fs::path& tiny_checkpoint() {
  static const fs::path ckpt = [] {
    const auto dir = fresh("shared_run");
    const Run r = run("pretrain --config " + q(tiny_json()) + " --out " + q(dir) + " --seed 3");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return dir / "final.bin";
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("render: single origin point gives the 0.5 center pixel") {
  std::ofstream(kRoot / "origin.xyz") << "0 0 0\n";
  const auto a = kRoot / "a.pgm", b = kRoot / "b.pgm";
  REQUIRE(run("render --input " + q(kRoot / "origin.xyz") + " --out " + q(a)).code == 0);
  const Pgm g = read_pgm(a);
  CHECK(g.h == 224);
  CHECK(g.w == 224);
  std::size_t nonzero = 0;
  for (auto v : g.px) nonzero += v != 0;
  CHECK(nonzero == 1);
  const unsigned center = g.px[112 * 224 + 112];
  CHECK((center >= 32767 && center <= 32769));
  CHECK(center == 32768);

  REQUIRE(run("render --input " + q(kRoot / "origin.xyz") + " --pose 0,30,2.2,50 --size 224x224 --out " + q(b)).code == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("render: empty frustum gives an all-zero image") {
  // Beyond the camera along its own position vector.
  std::ofstream(kRoot / "behind.xyz") << "4 0 2.31\n";
  const auto out = kRoot / "empty.pgm";
  REQUIRE(run("render --input " + q(kRoot / "behind.xyz") + " --size 32x48 --out " + q(out)).code == 0);
  const Pgm g = read_pgm(out);
  CHECK(g.h == 32);
  CHECK(g.w == 48);
  for (auto v : g.px) CHECK(v == 0);
}

TEST_CASE("render: repeated runs of a real cloud are byte-identical") {
  const auto cloud = write_cloud("torus.xyz", 2048, 5);
  const auto a = kRoot / "t1.pgm", b = kRoot / "t2.pgm";
  REQUIRE(run("render --input " + q(cloud) + " --pose 45,20,2.5,40 --size 64x64 --out " + q(a)).code == 0);
  REQUIRE(run("render --input " + q(cloud) + " --pose 45,20,2.5,40 --size 64x64 --out " + q(b)).code == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("input and config errors exit 2 and name the path") {
  const auto missing = kRoot / "nope.xyz";
  Run r = run("render --input " + q(missing) + " --out " + q(kRoot / "x.pgm"));
  CHECK(r.code == 2);
  CHECK(r.err.find(missing.string()) != std::string::npos);

  const auto cfg = kRoot / "no_such_config.json";
  r = run("pretrain --config " + q(cfg) + " --out " + q(fresh("never")));
  CHECK(r.code == 2);
  CHECK(r.err.find(cfg.string()) != std::string::npos);

  std::ofstream(kRoot / "origin.xyz") << "0 0 0\n";
  CHECK(run("render --input " + q(kRoot / "origin.xyz") + " --pose 0,30 --out " + q(kRoot / "x.pgm")).code == 2);
  CHECK(run("render --input " + q(kRoot / "origin.xyz") + " --size 224 --out " + q(kRoot / "x.pgm")).code == 2);

  std::ofstream(kRoot / "bad.json") << "{\"version\": 1, \"model\": {\"widht\": 3}}";
  CHECK(run("pretrain --config " + q(kRoot / "bad.json") + " --out " + q(fresh("never"))).code == 2);
  CHECK(run("probe --checkpoint " + q(kRoot / "nope.bin")).code == 2);
}

TEST_CASE("pretrain writes a manifest and refuses to overwrite it without --force") {
  const auto dir = fresh("manifest");
  const std::string base = "pretrain --config " + q(tiny_json()) + " --out " + q(dir) + " --seed 1 --max-steps 2";
  Run r = run(base);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["command"] == "pretrain");
  CHECK(m["seed"] == 1);
  CHECK(m["exit_code"] == 0);
  CHECK(m["status"] == "ok");
  CHECK(m["config_hash"] == config_hash(load_config(tiny_json())));
  CHECK(m.contains("start"));
  CHECK(m.contains("end"));
  CHECK(m.contains("tool_version"));
  CHECK(fs::exists(dir / "metrics.tsv"));
  CHECK(fs::exists(dir / "ckpt_step2.bin"));

  r = run(base);
  CHECK(r.code == 2);
  CHECK(r.err.find("--force") != std::string::npos);
  r = run(base + " --force");
  CHECK(r.code == 0);
  std::size_t rows = 0;
  for (char c : slurp(dir / "metrics.tsv")) rows += c == '\n';
  CHECK(rows == 3);
}

TEST_CASE("pretrain: identical seeds give identical metrics; resume reproduces the tail") {
  const auto a = fresh("det_a"), b = fresh("det_b"), split = fresh("det_split");
  const std::string cfg = " --config " + q(tiny_json());
  REQUIRE(run("pretrain" + cfg + " --out " + q(a) + " --seed 9").code == 0);
  REQUIRE(run("pretrain" + cfg + " --out " + q(b) + " --seed 9").code == 0);
  CHECK(slurp(a / "metrics.tsv") == slurp(b / "metrics.tsv"));
  CHECK(slurp(a / "final.bin") == slurp(b / "final.bin"));

  REQUIRE(run("pretrain" + cfg + " --out " + q(split) + " --seed 9 --max-steps 4").code == 0);
  Run r = run("pretrain" + cfg + " --out " + q(split) + " --seed 9 --resume " + q(split / "ckpt_step4.bin"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(split / "metrics.tsv") == slurp(a / "metrics.tsv"));
  CHECK(slurp(split / "final.bin") == slurp(a / "final.bin"));

  const auto other = fresh("det_other");
  r = run("pretrain" + cfg + " --out " + q(other) + " --seed 9 --resume " + q(split / "ckpt_step4.bin"));
  REQUIRE(r.code == 0);
  CHECK(slurp(other / "final.bin") == slurp(a / "final.bin"));
}

TEST_CASE("pretrain: a diverging run exits 3") {
  Config c = load_config(tiny_json());
  c.train.lr = 1e300;
  c.train.lr_min = 1e300;
  save_config(kRoot / "diverge.json", c);
  const auto dir = fresh("diverge");
  Run r = run("pretrain --config " + q(kRoot / "diverge.json") + " --out " + q(dir));
  CHECK(r.code == 3);
  CHECK(r.err.find("at step") != std::string::npos);
  CHECK(json::parse(slurp(dir / "manifest.json"))["exit_code"] == 3);
}

TEST_CASE("reconstruct: file census, value range, config mismatch") {
  const auto cloud = write_cloud("recon.xyz", 300, 8);
  const auto dir = fresh("recon");
  Run r = run("reconstruct --checkpoint " + q(tiny_checkpoint()) + " --input " + q(cloud) + " --out " + q(dir) +
              " --config " + q(tiny_json()) + " --seed 4");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t xyz = 0, pgm = 0, manifests = 0, other = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (ext == ".xyz") ++xyz;
    else if (ext == ".pgm") ++pgm;
    else if (e.path().filename() == "manifest.json") ++manifests;
    else ++other;
  }
  CHECK(xyz == 2);
  CHECK(pgm == 4);
  CHECK(manifests == 1);
  CHECK(other == 0);
  CHECK(geo::read_cloud(dir / "masked_input.xyz").size() == 2 * 4);
  CHECK(geo::read_cloud(dir / "reconstructed_patches.xyz").size() == 6 * 4);
  const Pgm pred = read_pgm(dir / "view0_pred.pgm");
  CHECK(pred.h == 16);
  for (auto v : pred.px) CHECK(v <= 65535);

  const auto one = fresh("recon_one");
  REQUIRE(run("reconstruct --checkpoint " + q(tiny_checkpoint()) + " --input " + q(cloud) + " --out " + q(one) +
              " --views 1")
              .code == 0);
  CHECK(fs::exists(one / "view0_pred.pgm"));
  CHECK_FALSE(fs::exists(one / "view1_pred.pgm"));

  r = run("reconstruct --checkpoint " + q(tiny_checkpoint()) + " --input " + q(cloud) + " --out " +
          q(fresh("recon_bad")) + " --config " + q(fs::path(MVMAE_SOURCE_DIR) / "configs" / "desk.json"));
  CHECK(r.code == 2);
  r = run("reconstruct --checkpoint " + q(tiny_checkpoint()) + " --input " + q(cloud) + " --out " + q(dir));
  CHECK(r.code == 2);
}

TEST_CASE("probe: byte-identical JSON per seed, confusion, few-shot trials") {
  Run a = run("probe --checkpoint " + q(tiny_checkpoint()) + " --mode linear --seed 2");
  Run b = run("probe --checkpoint " + q(tiny_checkpoint()) + " --mode linear --seed 2");
  REQUIRE_MESSAGE(a.code == 0, a.err);
  CHECK(a.out == b.out);
  const json j = json::parse(a.out);
  CHECK(j["mode"] == "linear");
  CHECK(j["encoder"] == "pretrained");
  const double acc = j["accuracy"];
  CHECK((acc >= 0.0 && acc <= 1.0));
  REQUIRE(j["confusion"].size() == 5);
  std::size_t total = 0;
  for (const auto& row : j["confusion"])
    for (const auto& v : row) total += v.get<std::size_t>();
  CHECK(total == j["test_count"].get<std::size_t>());

  // Tiny preset has 4 instances per class: 5-way 10-shot is impossible.
  CHECK(run("probe --checkpoint " + q(tiny_checkpoint()) + " --mode fewshot").code == 2);

  Config c = load_config(tiny_json());
  c.data.instances_per_class = 30;
  save_config(kRoot / "fewshot.json", c);
  const auto dir = fresh("fewshot_run");
  REQUIRE(run("pretrain --config " + q(kRoot / "fewshot.json") + " --out " + q(dir) + " --max-steps 1").code == 0);
  Run f = run("probe --checkpoint " + q(dir / "ckpt_step1.bin") + " --mode fewshot --n-way 5 --m-shot 10 --seed 1");
  REQUIRE_MESSAGE(f.code == 0, f.err);
  const json fj = json::parse(f.out);
  CHECK(fj["n_way"] == 5);
  CHECK(fj["m_shot"] == 10);
  CHECK(fj["trial_accuracies"].size() == 10);
  CHECK(fj.contains("accuracy_std"));
  Run rnd = run("probe --checkpoint " + q(dir / "ckpt_step1.bin") + " --mode fewshot --random-init --seed 1");
  REQUIRE(rnd.code == 0);
  CHECK(json::parse(rnd.out)["encoder"] == "random-init");
}

TEST_CASE("gradcheck: tiny passes, a corrupted op fails by name, non-tiny warns") {
  Run r = run("gradcheck");
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("worst parameter") != std::string::npos);

  r = run("gradcheck --corrupt-op gelu");
  CHECK(r.code == 1);
  CHECK(r.out.find("FAIL op gelu") != std::string::npos);

  Config c = tiny_config();
  c.model.mask_ratio = 0.5;
  save_config(kRoot / "near_tiny.json", c);
  r = run("gradcheck --config " + q(kRoot / "near_tiny.json"));
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK_MESSAGE(r.code == 0, r.out);
}
