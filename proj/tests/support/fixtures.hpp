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

#include <memory>
#include <random>
#include <vector>

#include "cecollm/model/model.hpp"
#include "cecollm/model/model_io.hpp"

namespace cecollm::testing {

// Small enough that a full decode takes milliseconds.
inline model::ModelConfig tiny_config() {
  model::ModelConfig c;
  c.num_layers = 4;
  c.hidden_dim = 32;
  c.num_heads = 4;
  c.ffn_dim = 64;
  c.max_seq_len = 128;
  c.exit_layers = {1, 2};
  c.split_layer = 2;
  return c;
}

inline std::shared_ptr<const model::Model> make_model(const model::ModelConfig& c, std::uint64_t seed) {
  return std::make_shared<const model::Model>(model::generate_model(c, seed));
}

inline std::vector<model::TokenId> random_prompt(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> len(lo, hi);
  std::uniform_int_distribution<model::TokenId> tok(0, 255);
  std::vector<model::TokenId> p(len(rng));
  for (auto& t : p) t = tok(rng);
  return p;
}

}  // namespace cecollm::testing
