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
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cecollm/model/config.hpp"

namespace cecollm::model {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LayerWeights {
  std::vector<float> attn_norm;  // hidden
  std::vector<float> wq, wk, wv, wo;  // hidden x hidden, row-major (out, in)
  std::vector<float> ffn_norm;  // hidden
  std::vector<float> w_up;  // ffn x hidden
  std::vector<float> w_down;  // hidden x ffn
};

// Norm gain followed by a bias-free vocab projection.
struct HeadWeights {
  std::vector<float> norm;  // hidden
  std::vector<float> proj;  // vocab x hidden
};

struct Model {
  ModelConfig config;
  std::vector<float> embedding;  // vocab x hidden
  std::vector<LayerWeights> layers;
  std::vector<HeadWeights> exits;  // one per config.exit_layers entry
  HeadWeights final_head;
};

// Allocates every tensor at its configured shape, zero-filled.
Model allocate_model(const ModelConfig& config);

struct TensorRef {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float>* data;
};

// Canonical tensor order: embedding, then per layer (attn_norm, wq, wk, wv, wo,
// ffn_norm, w_up, w_down), then per exit (norm, head), then final (norm, head).
std::vector<TensorRef> tensors(Model& model);
std::size_t weight_count(const Model& model);
// Everything except the exit heads.
std::size_t backbone_weight_count(const Model& model);

struct LayerRange {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  std::uint32_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
};

// Per-position activations entering (layer == 0) or leaving layer `layer`.
struct HiddenStateBlock {
  std::uint32_t layer = 0;
  std::uint32_t first_position = 0;
  std::uint32_t hidden_dim = 0;
  std::vector<float> activations;  // num_positions x hidden_dim

  std::uint32_t num_positions() const {
    return hidden_dim == 0 ? 0 : static_cast<std::uint32_t>(activations.size() / hidden_dim);
  }
  std::uint32_t end_position() const { return first_position + num_positions(); }
  std::span<const float> row(std::size_t i) const {
    return {activations.data() + i * hidden_dim, hidden_dim};
  }
  std::span<float> row(std::size_t i) { return {activations.data() + i * hidden_dim, hidden_dim}; }
  // Rows [offset, offset + count) as a new block.
  HiddenStateBlock slice(std::uint32_t offset, std::uint32_t count) const;
};

// Keys and values for a contiguous layer range, indexed by sequence position.
class KVCache {
 public:
  KVCache() = default;
  KVCache(const ModelConfig& config, LayerRange layers);

  LayerRange layers() const { return layers_; }
  std::uint32_t cached_len() const { return cached_len_; }
  std::uint32_t max_len() const { return max_len_; }
  std::span<const float> keys(std::uint32_t layer) const;
  std::span<const float> values(std::uint32_t layer) const;
  void clear();

 private:
  friend class LayerStack;
  LayerRange layers_{};
  std::uint32_t hidden_dim_ = 0;
  std::uint32_t max_len_ = 0;
  std::uint32_t cached_len_ = 0;
  std::vector<std::vector<float>> k_, v_;
};

// A run of consecutive transformer layers, borrowed from a model or a partition.
class LayerStack {
 public:
  LayerStack(const ModelConfig& config, std::span<const LayerWeights> layers,
             std::uint32_t first_layer)
      : config_(&config), layers_(layers), first_layer_(first_layer) {}

  LayerRange available() const {
    return {first_layer_, first_layer_ + static_cast<std::uint32_t>(layers_.size())};
  }

  // Runs `range` over the block, appending its keys/values to `cache`. The
  // cache must cover exactly `range` and end where the block begins.
  HiddenStateBlock forward(LayerRange range, const HiddenStateBlock& input, KVCache& cache) const;

 private:
  const ModelConfig* config_;
  std::span<const LayerWeights> layers_;
  std::uint32_t first_layer_;
};

LayerStack layer_stack(const Model& model);

HiddenStateBlock forward_layers(const Model& model, LayerRange range, const HiddenStateBlock& input,
                                KVCache& cache);

// Scaled token embedding plus sinusoidal position encoding.
HiddenStateBlock embed(const ModelConfig& config, std::span<const float> embedding,
                       std::span<const TokenId> tokens, std::uint32_t first_position);
HiddenStateBlock embed(const Model& model, std::span<const TokenId> tokens,
                       std::uint32_t first_position);

struct Logits {
  std::vector<float> values;
};

Logits apply_head(const ModelConfig& config, const HeadWeights& head,
                  std::span<const float> activation);
Logits exit_head(const Model& model, std::size_t exit_index, std::span<const float> activation);
Logits final_head(const Model& model, std::span<const float> activation);

struct Confidence {
  double conf = 0.0;  // max softmax probability
  TokenId token = 0;  // argmax, lowest id on ties
};

// Throws ModelError on an empty or non-finite logit vector.
Confidence confidence(const Logits& logits);

struct ExitDecision {
  double conf = 0.0;
  TokenId token = 0;
  bool exited = false;
  std::optional<std::size_t> exit_index;
};

inline bool passes_threshold(double conf, double theta) { return conf >= theta; }

struct EdgePartition {
  ModelConfig config;
  std::vector<float> embedding;
  std::vector<LayerWeights> layers;  // [0, k)
  std::vector<HeadWeights> exits;

  LayerStack stack() const { return LayerStack(config, layers, 0); }
  std::size_t weight_count() const;
};

struct CloudPartition {
  ModelConfig config;
  std::vector<LayerWeights> layers;  // [k, L)
  HeadWeights final_head;

  LayerRange range() const { return {config.split_layer, config.num_layers}; }
  LayerStack stack() const { return LayerStack(config, layers, config.split_layer); }
  std::size_t weight_count() const;
};

// Copies the model's weights into an edge half (embedding, layers [0,k), exit
// heads) and a cloud half (layers [k,L), final head).
std::pair<EdgePartition, CloudPartition> split(const Model& model, std::uint32_t k);

// Full-model incremental greedy decoder: the single code path behind both the
// monolithic oracle and the cloud's full-model mode.
class GreedyDecoder {
 public:
  explicit GreedyDecoder(const Model& model);

  // Processes the prompt and returns the predicted next token.
  TokenId prefill(std::span<const TokenId> prompt);
  // Appends one token and returns the prediction for the position after it.
  TokenId feed(TokenId token);
  std::uint32_t length() const { return cache_.cached_len(); }
  const Logits& last_logits() const { return last_logits_; }

 private:
  TokenId predict(const HiddenStateBlock& out);

  const Model* model_;
  KVCache cache_;
  Logits last_logits_;
};

// Stops after max_new_tokens or right after emitting kEos (when it is in vocab).
std::vector<TokenId> greedy_decode_monolithic(const Model& model, std::span<const TokenId> prompt,
                                              std::uint32_t max_new_tokens);

inline bool is_eos(const ModelConfig& config, TokenId token) {
  return config.vocab_size > kEos && token == kEos;
}

}  // namespace cecollm::model
