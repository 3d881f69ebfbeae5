// Copyright 2026 The cecollm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cecollm/model/model_io.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cecollm::model {

namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

bool is_norm(std::string_view name) {
  return name.ends_with("norm");
}

bool is_head_norm(std::string_view name) {
  return name == "final.norm" || (name.starts_with("exits.") && name.ends_with(".norm"));
}

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (in_.size() - pos_ < n) throw ModelError("model file truncated");
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

float weight_uniform01(std::uint64_t seed, std::string_view tensor_name, std::uint64_t index) {
  const std::uint64_t key = splitmix64(seed ^ fnv1a64(tensor_name));
  const std::uint64_t bits = splitmix64(key + index * 0xD1B54A32D192ED03ull);
  return static_cast<float>(bits >> 40) * 0x1.0p-24f;
}

Model generate_model(const ModelConfig& config, std::uint64_t seed, const GenerateOptions& options) {
  Model m = allocate_model(config);
  for (auto& t : tensors(m)) {
    auto& data = *t.data;
    if (is_norm(t.name)) {
      const float g = is_head_norm(t.name) ? options.head_norm_gain : options.layer_norm_gain;
      std::fill(data.begin(), data.end(), g);
      continue;
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const float u = weight_uniform01(seed, t.name, i);
      data[i] = (2.0f * u - 1.0f) * options.weight_bound;
    }
  }
  return m;
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  Model& m = const_cast<Model&>(model);  // tensors() only hands out pointers; nothing is written
  const auto& c = model.config;
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.bytes("CELM", 4);
  w.put<std::uint16_t>(kModelFormatVersion);
  for (std::uint32_t v : {c.num_layers, c.hidden_dim, c.num_heads, c.ffn_dim, c.vocab_size,
                          c.max_seq_len, c.split_layer, static_cast<std::uint32_t>(c.position_scheme),
                          static_cast<std::uint32_t>(c.exit_layers.size())}) {
    w.put(v);
  }
  for (std::uint32_t e : c.exit_layers) w.put(e);
  auto ts = tensors(m);
  w.put(static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    w.put(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint8_t>(t.shape.size()));
    for (std::uint32_t dim : t.shape) w.put(dim);
  }
  for (const auto& t : ts) w.bytes(t.data->data(), t.data->size() * sizeof(float));
  return out;
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, "CELM", 4) != 0) throw ModelError("bad model magic");
  if (r.get<std::uint16_t>() != kModelFormatVersion) throw ModelError("unsupported model version");
  ModelConfig c;
  c.num_layers = r.get<std::uint32_t>();
  c.hidden_dim = r.get<std::uint32_t>();
  c.num_heads = r.get<std::uint32_t>();
  c.ffn_dim = r.get<std::uint32_t>();
  c.vocab_size = r.get<std::uint32_t>();
  c.max_seq_len = r.get<std::uint32_t>();
  c.split_layer = r.get<std::uint32_t>();
  c.position_scheme = static_cast<PositionScheme>(r.get<std::uint32_t>());
  const std::uint32_t num_exits = r.get<std::uint32_t>();
  if (num_exits > 4096) throw ModelError("implausible exit count");
  c.exit_layers.resize(num_exits);
  for (auto& e : c.exit_layers) e = r.get<std::uint32_t>();
  Model m = allocate_model(c);

  auto ts = tensors(m);
  if (r.get<std::uint32_t>() != ts.size()) throw ModelError("tensor count does not match config");
  for (const auto& t : ts) {
    const auto len = r.get<std::uint16_t>();
    std::string name(len, '\0');
    r.take(name.data(), len);
    if (name != t.name) throw ModelError("unexpected tensor '" + name + "', wanted '" + t.name + "'");
    const auto rank = r.get<std::uint8_t>();
    if (rank != t.shape.size()) throw ModelError("rank mismatch for " + name);
    for (std::uint32_t dim : t.shape) {
      if (r.get<std::uint32_t>() != dim) throw ModelError("shape mismatch for " + name);
    }
  }
  for (const auto& t : ts) {
    r.take(t.data->data(), t.data->size() * sizeof(float));
    for (float v : *t.data) {
      if (!std::isfinite(v)) throw ModelError("non-finite weight in " + t.name);
    }
  }
  if (!r.done()) throw ModelError("trailing bytes after tensor data");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ModelError("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

ModelHash sha256(std::span<const std::uint8_t> bytes) {
  ModelHash h{};
  SHA256(bytes.data(), bytes.size(), h.data());
  return h;
}

ModelHash model_hash(const Model& model) { return sha256(serialize_model(model)); }

}  // namespace cecollm::model
