// Copyright 2026 The mvmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvmae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mvmae/error.hpp"

namespace mvmae::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f64s(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void bytes(void* p, std::size_t n, const char* what) {
    if (in_.size() - pos_ < n)
      throw CheckpointError(std::string("truncated checkpoint while reading ") + what, pos_);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod(const char* what) {
    T v;
    bytes(&v, sizeof v, what);
    return v;
  }
  std::string str(const char* what) {
    const auto n = pod<std::uint32_t>(what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  std::vector<double> f64s(std::size_t count, const char* what) {
    if ((in_.size() - pos_) / sizeof(double) < count)
      throw CheckpointError(std::string("truncated checkpoint while reading ") + what, pos_);
    std::vector<double> v(count);
    bytes(v.data(), count * sizeof(double), what);
    return v;
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::size_t element_count(const std::vector<std::uint64_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

Checkpoint capture(const Config& config, const model::MultiviewMae& model,
                   const optim::OptimState& optim, std::uint64_t step, const Rng& rng) {
  Checkpoint c;
  c.config = config;
  for (const auto& p : model.params().all()) {
    NamedArray a;
    a.name = p.name;
    for (auto d : p.tensor.shape()) a.dims.push_back(d);
    a.data.assign(p.tensor.data().begin(), p.tensor.data().end());
    c.params.push_back(std::move(a));
  }
  c.optim = optim;
  c.step = step;
  c.rng_state = rng.state();
  return c;
}

void restore_parameters(const Checkpoint& ckpt, model::MultiviewMae& model) {
  auto& params = model.params().all();
  if (params.size() != ckpt.params.size())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.params[i];
    auto& dst = params[i];
    std::vector<std::uint64_t> dims(dst.tensor.shape().begin(), dst.tensor.shape().end());
    if (src.name != dst.name || src.dims != dims)
      throw ConfigError("checkpoint parameter '" + src.name + "' does not match model parameter '" +
                        dst.name + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto out = params[i].tensor.mutable_data();
    std::copy(ckpt.params[i].data.begin(), ckpt.params[i].data.end(), out.begin());
  }
}

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.pod(kFormatVersion);
  w.str(to_json(c.config).dump());
  w.pod(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) {
    w.str(p.name);
    w.pod(kDtypeF64);
    w.pod(static_cast<std::uint32_t>(p.dims.size()));
    for (auto d : p.dims) w.pod(d);
    w.f64s(p.data);
  }
  w.pod(c.optim.step);
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const bool present = i < c.optim.m.size() && !c.optim.m[i].empty();
    w.pod(static_cast<std::uint8_t>(present));
    if (present) {
      w.f64s(c.optim.m[i]);
      w.f64s(c.optim.v[i]);
    }
  }
  w.pod(c.step);
  w.str(c.rng_state);
  return w.take();
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[sizeof kMagic];
  r.bytes(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("bad checkpoint magic", 0);
  const auto version_at = r.offset();
  const auto version = r.pod<std::uint32_t>("format version");
  if (version != kFormatVersion)
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version),
                          version_at);

  Checkpoint c;
  const auto config_at = r.offset();
  const std::string config_text = r.str("config");
  try {
    c.config = config_from_json(nlohmann::json::parse(config_text));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("embedded config rejected: ") + e.what(), config_at);
  }

  const auto count = r.pod<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str("parameter name");
    const auto dtype_at = r.offset();
    if (r.pod<std::uint8_t>("dtype") != kDtypeF64)
      throw CheckpointError("unsupported dtype for '" + a.name + "'", dtype_at);
    const auto rank = r.pod<std::uint32_t>("rank");
    if (rank > 8) throw CheckpointError("implausible rank for '" + a.name + "'", r.offset() - 4);
    for (std::uint32_t d = 0; d < rank; ++d) a.dims.push_back(r.pod<std::uint64_t>("dims"));
    a.data = r.f64s(element_count(a.dims), "parameter data");
    c.params.push_back(std::move(a));
  }

  c.optim.hyper = c.config.train.adamw;
  c.optim.step = r.pod<std::uint64_t>("optimizer step");
  for (const auto& p : c.params) {
    const auto present = r.pod<std::uint8_t>("moment flag");
    if (present) {
      c.optim.m.push_back(r.f64s(p.data.size(), "first moment"));
      c.optim.v.push_back(r.f64s(p.data.size(), "second moment"));
    } else {
      c.optim.m.emplace_back();
      c.optim.v.emplace_back();
    }
  }
  c.step = r.pod<std::uint64_t>("training step");
  c.rng_state = r.str("rng state");
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint", r.offset());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t parameter_hash(const nn::ParameterStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : store.all()) {
    feed(p.name.data(), p.name.size());
    feed(p.tensor.data().data(), p.tensor.numel() * sizeof(double));
  }
  return h;
}

}  // namespace mvmae::ckpt
