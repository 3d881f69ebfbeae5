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

#include "cecollm/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cecollm/model/tensor_ops.hpp"

namespace cecollm::model {

namespace {

void check_finite(std::span<const float> xs, const char* what) {
  for (float x : xs) {
    if (!std::isfinite(x)) throw ModelError(std::string("non-finite value in ") + what);
  }
}

float silu(float x) { return x / (1.0f + std::exp(-x)); }

std::size_t layer_weight_count(const LayerWeights& l) {
  return l.attn_norm.size() + l.wq.size() + l.wk.size() + l.wv.size() + l.wo.size() +
         l.ffn_norm.size() + l.w_up.size() + l.w_down.size();
}

std::size_t head_weight_count(const HeadWeights& h) { return h.norm.size() + h.proj.size(); }

}  // namespace

Model allocate_model(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden_dim, f = config.ffn_dim, v = config.vocab_size;
  Model m;
  m.config = config;
  m.embedding.assign(v * d, 0.0f);
  m.layers.resize(config.num_layers);
  for (auto& l : m.layers) {
    l.attn_norm.assign(d, 0.0f);
    l.wq.assign(d * d, 0.0f);
    l.wk.assign(d * d, 0.0f);
    l.wv.assign(d * d, 0.0f);
    l.wo.assign(d * d, 0.0f);
    l.ffn_norm.assign(d, 0.0f);
    l.w_up.assign(f * d, 0.0f);
    l.w_down.assign(d * f, 0.0f);
  }
  m.exits.resize(config.num_exits());
  for (auto& h : m.exits) {
    h.norm.assign(d, 0.0f);
    h.proj.assign(v * d, 0.0f);
  }
  m.final_head.norm.assign(d, 0.0f);
  m.final_head.proj.assign(v * d, 0.0f);
  return m;
}

std::vector<TensorRef> tensors(Model& m) {
  const std::uint32_t d = m.config.hidden_dim, f = m.config.ffn_dim, v = m.config.vocab_size;
  std::vector<TensorRef> out;
  out.push_back({"embedding", {v, d}, &m.embedding});
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto& l = m.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "attn_norm", {d}, &l.attn_norm});
    out.push_back({p + "wq", {d, d}, &l.wq});
    out.push_back({p + "wk", {d, d}, &l.wk});
    out.push_back({p + "wv", {d, d}, &l.wv});
    out.push_back({p + "wo", {d, d}, &l.wo});
    out.push_back({p + "ffn_norm", {d}, &l.ffn_norm});
    out.push_back({p + "w_up", {f, d}, &l.w_up});
    out.push_back({p + "w_down", {d, f}, &l.w_down});
  }
  for (std::size_t i = 0; i < m.exits.size(); ++i) {
    const std::string p = "exits." + std::to_string(i) + ".";
    out.push_back({p + "norm", {d}, &m.exits[i].norm});
    out.push_back({p + "head", {v, d}, &m.exits[i].proj});
  }
  out.push_back({"final.norm", {d}, &m.final_head.norm});
  out.push_back({"final.head", {v, d}, &m.final_head.proj});
  return out;
}

std::size_t backbone_weight_count(const Model& m) {
  std::size_t n = m.embedding.size() + head_weight_count(m.final_head);
  for (const auto& l : m.layers) n += layer_weight_count(l);
  return n;
}

std::size_t weight_count(const Model& m) {
  std::size_t n = backbone_weight_count(m);
  for (const auto& h : m.exits) n += head_weight_count(h);
  return n;
}

HiddenStateBlock HiddenStateBlock::slice(std::uint32_t offset, std::uint32_t count) const {
  HiddenStateBlock out;
  out.layer = layer;
  out.first_position = first_position + offset;
  out.hidden_dim = hidden_dim;
  auto begin = activations.begin() + static_cast<std::ptrdiff_t>(offset) * hidden_dim;
  out.activations.assign(begin, begin + static_cast<std::ptrdiff_t>(count) * hidden_dim);
  return out;
}

KVCache::KVCache(const ModelConfig& config, LayerRange layers)
    : layers_(layers),
      hidden_dim_(config.hidden_dim),
      max_len_(config.max_seq_len),
      k_(layers.size()),
      v_(layers.size()) {}

std::span<const float> KVCache::keys(std::uint32_t layer) const {
  const auto& k = k_.at(layer - layers_.begin);
  return {k.data(), static_cast<std::size_t>(cached_len_) * hidden_dim_};
}

std::span<const float> KVCache::values(std::uint32_t layer) const {
  const auto& v = v_.at(layer - layers_.begin);
  return {v.data(), static_cast<std::size_t>(cached_len_) * hidden_dim_};
}

void KVCache::clear() {
  for (auto& k : k_) k.clear();
  for (auto& v : v_) v.clear();
  cached_len_ = 0;
}

HiddenStateBlock LayerStack::forward(LayerRange range, const HiddenStateBlock& input,
                                     KVCache& cache) const {
  if (range.empty()) {
    // A cache over zero layers only tracks length (cloud side when k == L).
    if (cache.layers_.empty() && input.first_position == cache.cached_len_) {
      cache.cached_len_ += input.num_positions();
    }
    return input;
  }
  const ModelConfig& cfg = *config_;
  const LayerRange have = available();
  if (range.begin < have.begin || range.end > have.end) {
    throw ModelError("layer range [" + std::to_string(range.begin) + "," +
                     std::to_string(range.end) + ") not held by this stack");
  }
  if (cache.layers_.begin != range.begin || cache.layers_.end != range.end) {
    throw ModelError("KV cache layer range does not match forward range");
  }
  if (input.layer != range.begin) {
    throw ModelError("input block is at layer " + std::to_string(input.layer) +
                     ", expected " + std::to_string(range.begin));
  }
  const std::uint32_t n = input.num_positions();
  if (n == 0 || input.hidden_dim != cfg.hidden_dim) throw ModelError("malformed input block");
  if (input.first_position != cache.cached_len_) {
    throw ModelError("non-contiguous positions: cache holds " +
                     std::to_string(cache.cached_len_) + ", block starts at " +
                     std::to_string(input.first_position));
  }
  if (static_cast<std::uint64_t>(input.first_position) + n > cfg.max_seq_len) {
    throw ModelError("sequence would exceed max_seq_len");
  }

  const std::size_t d = cfg.hidden_dim, f = cfg.ffn_dim, hd = cfg.head_dim();
  const std::uint32_t first = input.first_position;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  HiddenStateBlock x = input;
  std::vector<float> normed(d), q(static_cast<std::size_t>(n) * d), attn(d), proj(d), up(f);
  std::vector<float> scores;

  for (std::uint32_t layer = range.begin; layer < range.end; ++layer) {
    const LayerWeights& w = layers_[layer - first_layer_];
    auto& kc = cache.k_[layer - range.begin];
    auto& vc = cache.v_[layer - range.begin];
    kc.resize((static_cast<std::size_t>(first) + n) * d);
    vc.resize((static_cast<std::size_t>(first) + n) * d);

    for (std::uint32_t i = 0; i < n; ++i) {
      rms_norm(x.row(i), w.attn_norm, normed);
      const std::size_t pos = first + i;
      matvec(w.wq, d, d, normed, std::span<float>(q.data() + i * d, d));
      matvec(w.wk, d, d, normed, std::span<float>(kc.data() + pos * d, d));
      matvec(w.wv, d, d, normed, std::span<float>(vc.data() + pos * d, d));
    }

    for (std::uint32_t i = 0; i < n; ++i) {
      const std::size_t pos = first + i;
      scores.resize(pos + 1);
      for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        const float* qh = q.data() + i * d + h * hd;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j <= pos; ++j) {
          scores[j] = dot(qh, kc.data() + j * d + h * hd, hd) * scale;
          mx = std::max(mx, scores[j]);
        }
        float sum = 0.0f;
        for (std::size_t j = 0; j <= pos; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          sum += scores[j];
        }
        float* out = attn.data() + h * hd;
        std::fill(out, out + hd, 0.0f);
        for (std::size_t j = 0; j <= pos; ++j) {
          const float p = scores[j] / sum;
          const float* vj = vc.data() + j * d + h * hd;
          for (std::size_t c = 0; c < hd; ++c) out[c] += p * vj[c];
        }
      }
      matvec(w.wo, d, d, attn, proj);
      auto xi = x.row(i);
      for (std::size_t c = 0; c < d; ++c) xi[c] += proj[c];

      rms_norm(xi, w.ffn_norm, normed);
      matvec(w.w_up, f, d, normed, up);
      for (auto& u : up) u = silu(u);
      matvec(w.w_down, d, f, up, proj);
      for (std::size_t c = 0; c < d; ++c) xi[c] += proj[c];
    }
  }
  cache.cached_len_ = first + n;
  x.layer = range.end;
  return x;
}

LayerStack layer_stack(const Model& model) { return LayerStack(model.config, model.layers, 0); }

HiddenStateBlock forward_layers(const Model& model, LayerRange range, const HiddenStateBlock& input,
                                KVCache& cache) {
  return layer_stack(model).forward(range, input, cache);
}

HiddenStateBlock embed(const ModelConfig& config, std::span<const float> embedding,
                       std::span<const TokenId> tokens, std::uint32_t first_position) {
  if (tokens.empty()) throw ModelError("cannot embed an empty token sequence");
  if (static_cast<std::uint64_t>(first_position) + tokens.size() > config.max_seq_len) {
    throw ModelError("sequence would exceed max_seq_len");
  }
  const std::size_t d = config.hidden_dim;
  const float scale = std::sqrt(static_cast<float>(d));
  HiddenStateBlock b;
  b.layer = 0;
  b.first_position = first_position;
  b.hidden_dim = config.hidden_dim;
  b.activations.resize(tokens.size() * d);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= config.vocab_size) {
      throw ModelError("token id " + std::to_string(tokens[i]) + " outside vocabulary");
    }
    const float* e = embedding.data() + static_cast<std::size_t>(tokens[i]) * d;
    const double pos = static_cast<double>(first_position + i);
    auto row = b.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / static_cast<double>(d));
      const double pe = (c % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
      row[c] = scale * e[c] + static_cast<float>(pe);
    }
  }
  return b;
}

HiddenStateBlock embed(const Model& model, std::span<const TokenId> tokens,
                       std::uint32_t first_position) {
  return embed(model.config, model.embedding, tokens, first_position);
}

Logits apply_head(const ModelConfig& config, const HeadWeights& head,
                  std::span<const float> activation) {
  if (activation.size() != config.hidden_dim) throw ModelError("activation width mismatch");
  std::vector<float> normed(config.hidden_dim);
  rms_norm(activation, head.norm, normed);
  Logits out;
  out.values.resize(config.vocab_size);
  matvec(head.proj, config.vocab_size, config.hidden_dim, normed, out.values);
  return out;
}

Logits exit_head(const Model& model, std::size_t exit_index, std::span<const float> activation) {
  if (exit_index >= model.exits.size()) {
    throw ModelError("invalid exit index " + std::to_string(exit_index));
  }
  return apply_head(model.config, model.exits[exit_index], activation);
}

Logits final_head(const Model& model, std::span<const float> activation) {
  return apply_head(model.config, model.final_head, activation);
}

Confidence confidence(const Logits& logits) {
  const auto& z = logits.values;
  if (z.empty()) throw ModelError("empty logits");
  check_finite(z, "logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = i;
  }
  const double mx = z[best];
  double denom = 0.0;
  for (float v : z) denom += std::exp(static_cast<double>(v) - mx);
  return {1.0 / denom, static_cast<TokenId>(best)};
}

std::size_t EdgePartition::weight_count() const {
  std::size_t n = embedding.size();
  for (const auto& l : layers) n += layer_weight_count(l);
  for (const auto& h : exits) n += head_weight_count(h);
  return n;
}

std::size_t CloudPartition::weight_count() const {
  std::size_t n = head_weight_count(final_head);
  for (const auto& l : layers) n += layer_weight_count(l);
  return n;
}

std::pair<EdgePartition, CloudPartition> split(const Model& model, std::uint32_t k) {
  ModelConfig cfg = model.config;
  cfg.split_layer = k;
  cfg.validate();
  EdgePartition edge;
  edge.config = cfg;
  edge.embedding = model.embedding;
  edge.layers.assign(model.layers.begin(), model.layers.begin() + k);
  edge.exits = model.exits;
  CloudPartition cloud;
  cloud.config = cfg;
  cloud.layers.assign(model.layers.begin() + k, model.layers.end());
  cloud.final_head = model.final_head;
  return {std::move(edge), std::move(cloud)};
}

GreedyDecoder::GreedyDecoder(const Model& model)
    : model_(&model), cache_(model.config, {0, model.config.num_layers}) {}

TokenId GreedyDecoder::predict(const HiddenStateBlock& out) {
  last_logits_ = final_head(*model_, out.row(out.num_positions() - 1));
  return confidence(last_logits_).token;
}

TokenId GreedyDecoder::prefill(std::span<const TokenId> prompt) {
  if (prompt.empty()) throw ModelError("prompt must be non-empty");
  if (cache_.cached_len() != 0) throw ModelError("decoder already holds a sequence");
  auto block = embed(*model_, prompt, 0);
  return predict(forward_layers(*model_, {0, model_->config.num_layers}, block, cache_));
}

TokenId GreedyDecoder::feed(TokenId token) {
  auto block = embed(*model_, std::span<const TokenId>(&token, 1), cache_.cached_len());
  return predict(forward_layers(*model_, {0, model_->config.num_layers}, block, cache_));
}

std::vector<TokenId> greedy_decode_monolithic(const Model& model, std::span<const TokenId> prompt,
                                              std::uint32_t max_new_tokens) {
  if (prompt.empty()) throw ModelError("prompt must be non-empty");
  if (static_cast<std::uint64_t>(prompt.size()) + max_new_tokens > model.config.max_seq_len) {
    throw ModelError("prompt length + max_new_tokens exceeds max_seq_len");
  }
  std::vector<TokenId> out;
  if (max_new_tokens == 0) return out;
  GreedyDecoder dec(model);
  TokenId next = dec.prefill(prompt);
  while (true) {
    out.push_back(next);
    if (out.size() == max_new_tokens || is_eos(model.config, next)) break;
    next = dec.feed(next);
  }
  return out;
}

}  // namespace cecollm::model
