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

#include "cecollm/model/config.hpp"

#include <sstream>

namespace cecollm::model {

void ModelConfig::validate() const {
  if (num_layers == 0) throw ConfigError("num_layers must be positive");
  if (split_layer == 0 || split_layer > num_layers) {
    throw ConfigError("split_layer must satisfy 0 < k <= num_layers (k=" +
                      std::to_string(split_layer) + ", L=" + std::to_string(num_layers) + ")");
  }
  if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0) {
    throw ConfigError("hidden_dim must be a positive multiple of num_heads");
  }
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be at least 1");
  if (position_scheme != PositionScheme::kSinusoidal) throw ConfigError("unknown position scheme");
  std::uint32_t prev = 0;
  for (std::uint32_t e : exit_layers) {
    if (e == 0) throw ConfigError("exit layers must be >= 1");
    if (e <= prev) throw ConfigError("exit_layers must be strictly increasing");
    if (e > split_layer) {
      throw ConfigError("exit layer " + std::to_string(e) + " lies beyond split layer " +
                        std::to_string(split_layer));
    }
    prev = e;
  }
}

ModelConfig desk_config() { return ModelConfig{}; }

std::string describe(const ModelConfig& c) {
  std::ostringstream os;
  os << "layers=" << c.num_layers << " hidden=" << c.hidden_dim << " heads=" << c.num_heads
     << " ffn=" << c.ffn_dim << " vocab=" << c.vocab_size << " max_seq=" << c.max_seq_len
     << " split=" << c.split_layer << " exits=[";
  for (std::size_t i = 0; i < c.exit_layers.size(); ++i) {
    os << (i ? "," : "") << c.exit_layers[i];
  }
  os << "]";
  return os.str();
}

}  // namespace cecollm::model
