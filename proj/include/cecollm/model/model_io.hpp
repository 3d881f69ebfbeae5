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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "cecollm/model/model.hpp"

namespace cecollm::model {

inline constexpr std::uint16_t kModelFormatVersion = 1;

struct GenerateOptions {
  // Matrices and the embedding are uniform in [-weight_bound, weight_bound].
  float weight_bound = 0.08f;
  // Constant gain of the per-layer RMS norms.
  float layer_norm_gain = 1.0f;
  // Constant gain of the exit and final head norms. It sets the logit scale
  // and therefore where head confidences fall in [1/V, 1).
  float head_norm_gain = 6.0f;
};

// Counter-based uniform draw in [0, 1): a pure function of (seed, tensor name,
// element index). 24 bits of SplitMix64 output over a key derived from
// FNV-1a(name) mixed with the seed.
float weight_uniform01(std::uint64_t seed, std::string_view tensor_name, std::uint64_t index);

Model generate_model(const ModelConfig& config, std::uint64_t seed, const GenerateOptions& options = {});

// Binary layout (all little-endian): "CELM", u16 version, config as u32s
// (num_layers, hidden_dim, num_heads, ffn_dim, vocab_size, max_seq_len,
// split_layer, position_scheme, num_exits, exit_layers...), u32 tensor count,
// manifest entries (u16 name length, name bytes, u8 rank, u32 dims...), then
// every tensor's f32 data in manifest order.
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

using ModelHash = std::array<std::uint8_t, 32>;

// SHA-256 of the serialized model; both sides of a split compare this.
ModelHash model_hash(const Model& model);
ModelHash sha256(std::span<const std::uint8_t> bytes);

}  // namespace cecollm::model
