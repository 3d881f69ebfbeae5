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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cecollm::model {

using TokenId = std::uint32_t;

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by four specials.
inline constexpr TokenId kBos = 256;
inline constexpr TokenId kEos = 257;
inline constexpr TokenId kPad = 258;
inline constexpr TokenId kUnk = 259;
inline constexpr std::uint32_t kByteVocabSize = 260;

enum class PositionScheme : std::uint32_t { kSinusoidal = 0 };

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::uint32_t num_layers = 8;
  std::uint32_t hidden_dim = 256;
  std::uint32_t num_heads = 4;
  std::uint32_t ffn_dim = 1024;
  std::uint32_t vocab_size = kByteVocabSize;
  std::uint32_t max_seq_len = 1024;
  // An exit at layer e reads the residual stream after e layers have run.
  std::vector<std::uint32_t> exit_layers{2, 4};
  std::uint32_t split_layer = 4;
  PositionScheme position_scheme = PositionScheme::kSinusoidal;

  std::uint32_t head_dim() const { return hidden_dim / num_heads; }
  std::size_t num_exits() const { return exit_layers.size(); }

  // Throws ConfigError naming the first violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// 8 layers, hidden 256, 4 heads, ffn 1024, V = 260, split after layer 4,
// exits after layers 2 and 4.
ModelConfig desk_config();

std::string describe(const ModelConfig& config);

}  // namespace cecollm::model
