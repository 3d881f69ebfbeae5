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

#include "cecollm/cloud/server.hpp"

#include <algorithm>
#include <condition_variable>

namespace cecollm::cloud {

using codec::ErrorCode;
using model::TokenId;

namespace {

Reply error_reply(ErrorCode code, std::string detail, SimTime at) {
  return {codec::Error{code, std::move(detail)}, at};
}

codec::Error make_error(ErrorCode code, std::string detail) { return {code, std::move(detail)}; }

}  // namespace

struct CloudServer::Session {
  struct Row {
    std::vector<float> values;
    SimTime arrival{0};
  };

  std::uint64_t id = 0;
  ServerMode mode = ServerMode::kPartition;

  // Guarded by mu.
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::uint32_t, Row> pending;
  bool closed = false;
  SimTime last_activity{0};
  std::uint32_t processed_upto = 0;
  std::uint32_t cached_len = 0;
  std::uint64_t positions_computed = 0;
  std::uint64_t infer_count = 0;

  // Held for the duration of one infer; guards everything below.
  std::mutex infer_mu;
  model::KVCache cache;
  SimTime busy_until{0};
  std::vector<float> last_output;  // cloud-side output row at processed_upto - 1
  std::vector<TokenId> prompt;
  std::optional<model::GreedyDecoder> decoder;
  TokenId last_emitted = 0;
  std::uint32_t sequence_len = 0;
  bool ended = false;
};

CloudServer::CloudServer(std::shared_ptr<const model::Model> model, ServerConfig config)
    : model_(std::move(model)), config_(config) {
  if (!model_) throw std::invalid_argument("CloudServer needs a model");
  hash_ = model::model_hash(*model_);
  split_ = config_.split_layer == 0 ? model_->config.split_layer : config_.split_layer;
  if (config_.mode == ServerMode::kPartition) {
    partition_ = model::split(*model_, split_).second;
  }
  if (config_.eviction.ttl.count() <= 0) throw std::invalid_argument("eviction ttl must be positive");
}

CloudServer::~CloudServer() {
  std::lock_guard lk(sessions_mu_);
  for (auto& [id, s] : sessions_) {
    std::lock_guard slk(s->mu);
    s->closed = true;
    s->cv.notify_all();
  }
}

SimTime CloudServer::clock_now() const { return std::chrono::steady_clock::now() - epoch_; }

std::shared_ptr<CloudServer::Session> CloudServer::find(std::uint64_t id) const {
  std::lock_guard lk(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void CloudServer::touch(Session& s, SimTime t) { s.last_activity = std::max(s.last_activity, t); }

std::optional<codec::Error> CloudServer::open_session(std::uint64_t id, const codec::OpenSession& m,
                                                      SimTime now) {
  if (m.model_hash != hash_) {
    return make_error(ErrorCode::kModelMismatch, "model hash does not match the loaded model");
  }
  const auto& cfg = model_->config;
  if (config_.mode == ServerMode::kFull) {
    if (m.prompt.empty()) return make_error(ErrorCode::kMalformedPayload, "full-model session needs a prompt");
    if (m.prompt.size() > cfg.max_seq_len) return make_error(ErrorCode::kSequenceOverflow, "prompt too long");
    for (auto t : m.prompt) {
      if (t >= cfg.vocab_size) return make_error(ErrorCode::kMalformedPayload, "prompt token outside vocabulary");
    }
  }
  auto s = std::make_shared<Session>();
  s->id = id;
  s->mode = config_.mode;
  s->last_activity = now;
  if (config_.mode == ServerMode::kPartition) {
    s->cache = model::KVCache(cfg, partition_->range());
  } else {
    s->prompt = m.prompt;
  }
  std::lock_guard lk(sessions_mu_);
  if (!sessions_.emplace(id, s).second) {
    return make_error(ErrorCode::kDuplicateSession, "session " + std::to_string(id) + " already open");
  }
  return std::nullopt;
}

std::optional<codec::Error> CloudServer::upload(std::uint64_t id, const codec::ContextUpload& m,
                                                SimTime arrival) {
  auto s = find(id);
  if (!s) return make_error(ErrorCode::kUnknownSession, "no session " + std::to_string(id));
  if (s->mode != ServerMode::kPartition) {
    return make_error(ErrorCode::kWrongMode, "context uploads need a partition-mode server");
  }
  if (m.layer != split_) {
    return make_error(ErrorCode::kWrongLayer, "upload at layer " + std::to_string(m.layer) +
                                                  ", server resumes at layer " + std::to_string(split_));
  }
  const auto& cfg = model_->config;
  if (static_cast<std::uint64_t>(m.first_position) + m.num_positions > cfg.max_seq_len) {
    return make_error(ErrorCode::kBadPosition, "upload extends past max_seq_len");
  }
  std::vector<float> rows;
  try {
    rows = codec::unpack_activations(m, cfg.hidden_dim);
  } catch (const codec::DecodeError& e) {
    return make_error(e.code(), e.what());
  }
  const std::size_t d = cfg.hidden_dim;
  std::lock_guard lk(s->mu);
  if (s->closed) return make_error(ErrorCode::kUnknownSession, "session closed");
  touch(*s, arrival);
  for (std::uint32_t i = 0; i < m.num_positions; ++i) {
    const std::uint32_t pos = m.first_position + i;
    if (pos < s->processed_upto) continue;  // already folded into the cache
    auto begin = rows.begin() + static_cast<std::ptrdiff_t>(i * d);
    s->pending.try_emplace(pos, Session::Row{std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(d)), arrival});
  }
  s->cv.notify_all();
  return std::nullopt;
}

Reply CloudServer::infer(std::uint64_t id, const codec::InferRequest& m, SimTime arrival) {
  auto s = find(id);
  if (!s) return error_reply(ErrorCode::kUnknownSession, "no session " + std::to_string(id), arrival);
  if (s->mode != ServerMode::kPartition) {
    return error_reply(ErrorCode::kWrongMode, "server holds the full model", arrival);
  }
  std::lock_guard infer_lock(s->infer_mu);
  const auto& cfg = model_->config;
  const std::uint32_t p = m.target_position;

  std::vector<Session::Row> rows;
  std::uint32_t from = 0;
  {
    std::unique_lock lk(s->mu);
    if (s->closed) return error_reply(ErrorCode::kUnknownSession, "session closed", arrival);
    touch(*s, arrival);
    from = s->processed_upto;
    if (p >= cfg.max_seq_len) {
      return error_reply(ErrorCode::kSequenceOverflow, "target position past max_seq_len", arrival);
    }
    if (static_cast<std::uint64_t>(p) + 1 < from) {
      return error_reply(ErrorCode::kBadPosition,
                         "target " + std::to_string(p) + " precedes processed prefix " + std::to_string(from),
                         arrival);
    }
    if (p >= from) {
      const std::size_t needed = p - from + 1;
      auto complete = [&] {
        if (s->closed) return true;
        auto lo = s->pending.lower_bound(from);
        auto hi = s->pending.upper_bound(p);
        return static_cast<std::size_t>(std::distance(lo, hi)) == needed;
      };
      const auto deadline = std::chrono::steady_clock::now() + config_.context_wait_real;
      if (!s->cv.wait_until(lk, deadline, complete)) {
        return error_reply(ErrorCode::kContextTimeout,
                           "context rows [" + std::to_string(from) + "," + std::to_string(p) +
                               "] incomplete after wait",
                           arrival + config_.context_timeout);
      }
      if (s->closed) return error_reply(ErrorCode::kUnknownSession, "session closed", arrival);
      auto lo = s->pending.lower_bound(from);
      auto hi = s->pending.upper_bound(p);
      for (auto it = lo; it != hi; ++it) rows.push_back(std::move(it->second));
      s->pending.erase(lo, hi);
    } else if (s->last_output.empty()) {
      return error_reply(ErrorCode::kBadPosition, "nothing processed yet", arrival);
    }
  }

  SimTime start = std::max(arrival, s->busy_until);
  for (const auto& r : rows) start = std::max(start, r.arrival);

  const std::uint32_t n = static_cast<std::uint32_t>(rows.size());
  const auto range = partition_->range();
  TokenId token = 0;
  const SimTime modeled = config_.timing.cloud.of(static_cast<std::uint64_t>(n) * range.size(), 1);
  const SimTime spent = charge(config_.timing.measured, modeled, [&] {
    if (n > 0) {
      model::HiddenStateBlock block;
      block.layer = split_;
      block.first_position = from;
      block.hidden_dim = cfg.hidden_dim;
      block.activations.reserve(static_cast<std::size_t>(n) * cfg.hidden_dim);
      for (const auto& r : rows) block.activations.insert(block.activations.end(), r.values.begin(), r.values.end());
      auto out = partition_->stack().forward(range, block, s->cache);
      auto last = out.row(n - 1);
      s->last_output.assign(last.begin(), last.end());
    }
    token = model::confidence(model::apply_head(cfg, partition_->final_head, s->last_output)).token;
  });
  const SimTime ready = start + spent;
  s->busy_until = ready;
  {
    std::lock_guard lk(s->mu);
    s->processed_upto = std::max(s->processed_upto, p + 1);
    s->cached_len = s->cache.cached_len();
    s->positions_computed += n;
    positions_computed_ += n;
    s->infer_count += 1;
    touch(*s, ready);
  }
  return {codec::InferResponse{token, static_cast<std::uint64_t>(spent.count())}, ready};
}

std::optional<Reply> CloudServer::full_model_infer(std::uint64_t id, const codec::InferRequest& m,
                                                   SimTime arrival,
                                                   const std::function<void(const Reply&)>& emit) {
  auto s = find(id);
  if (!s) return error_reply(ErrorCode::kUnknownSession, "no session " + std::to_string(id), arrival);
  if (s->mode != ServerMode::kFull) {
    return error_reply(ErrorCode::kWrongMode, "server holds only the cloud partition", arrival);
  }
  std::lock_guard infer_lock(s->infer_mu);
  const auto& cfg = model_->config;
  {
    std::lock_guard lk(s->mu);
    if (s->closed) return error_reply(ErrorCode::kUnknownSession, "session closed", arrival);
    touch(*s, arrival);
  }
  if (m.target_position >= cfg.max_seq_len) {
    return error_reply(ErrorCode::kSequenceOverflow, "target position past max_seq_len", arrival);
  }
  if (s->ended) return error_reply(ErrorCode::kBadPosition, "sequence already ended with EOS", arrival);
  if (!s->decoder) {
    s->decoder.emplace(*model_);
    s->sequence_len = static_cast<std::uint32_t>(s->prompt.size());
  }
  if (m.target_position < s->sequence_len) {
    return error_reply(ErrorCode::kBadPosition, "target position already generated", arrival);
  }

  SimTime t = std::max(arrival, s->busy_until);
  const std::uint32_t layers = cfg.num_layers;
  while (s->sequence_len <= m.target_position) {
    const bool first = s->decoder->length() == 0;
    const std::uint64_t positions = first ? s->prompt.size() : 1;
    TokenId next = 0;
    const SimTime spent = charge(config_.timing.measured, config_.timing.cloud.of(positions * layers, 1), [&] {
      next = first ? s->decoder->prefill(s->prompt) : s->decoder->feed(s->last_emitted);
    });
    t += spent;
    s->last_emitted = next;
    s->sequence_len += 1;
    {
      std::lock_guard lk(s->mu);
      s->positions_computed += positions;
      positions_computed_ += positions;
      s->processed_upto = s->decoder->length();
      s->cached_len = s->decoder->length();
      s->infer_count += 1;
      touch(*s, t);
    }
    emit(Reply{codec::InferResponse{next, static_cast<std::uint64_t>(spent.count())}, t});
    if (model::is_eos(cfg, next)) {
      s->ended = true;
      break;
    }
  }
  s->busy_until = t;
  return std::nullopt;
}

bool CloudServer::close_session(std::uint64_t id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lk(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    s = std::move(it->second);
    sessions_.erase(it);
  }
  std::lock_guard lk(s->mu);
  s->closed = true;
  s->pending.clear();
  s->cv.notify_all();
  return true;
}

std::size_t CloudServer::evict(SimTime now) {
  std::vector<std::shared_ptr<Session>> victims;
  {
    std::lock_guard lk(sessions_mu_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      bool idle;
      {
        std::lock_guard slk(it->second->mu);
        idle = now - it->second->last_activity > config_.eviction.ttl;
      }
      if (idle) {
        victims.push_back(std::move(it->second));
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : victims) {
    std::lock_guard lk(s->mu);
    s->closed = true;
    s->pending.clear();
    s->cv.notify_all();
  }
  return victims.size();
}

std::optional<SessionStats> CloudServer::stats(std::uint64_t id) const {
  auto s = find(id);
  if (!s) return std::nullopt;
  std::lock_guard lk(s->mu);
  SessionStats st;
  st.mode = s->mode;
  st.processed_upto = s->processed_upto;
  st.cached_len = s->cached_len;
  st.pending_rows = s->pending.size();
  st.min_pending_position = s->pending.empty() ? 0 : s->pending.begin()->first;
  st.positions_computed = s->positions_computed;
  st.infer_count = s->infer_count;
  st.last_activity = s->last_activity;
  return st;
}

std::size_t CloudServer::session_count() const {
  std::lock_guard lk(sessions_mu_);
  return sessions_.size();
}

}  // namespace cecollm::cloud
