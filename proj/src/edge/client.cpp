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

#include "cecollm/edge/client.hpp"

#include <algorithm>
#include <cmath>

namespace cecollm::edge {

using codec::WireEncoding;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kStandalone: return "standalone";
    case Mode::kCollaborative: return "collaborative";
    case Mode::kNaiveSplit: return "naive-split";
    case Mode::kCloudOnly: return "cloud-only";
  }
  return "?";
}

std::string_view to_string(UploadPolicy p) {
  switch (p) {
    case UploadPolicy::kAlways: return "always";
    case UploadPolicy::kOnFirstOffload: return "on-first-offload";
    case UploadPolicy::kNever: return "never";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::kStandalone, Mode::kCollaborative, Mode::kNaiveSplit, Mode::kCloudOnly}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

UploadPolicy parse_upload_policy(std::string_view s) {
  for (UploadPolicy p : {UploadPolicy::kAlways, UploadPolicy::kOnFirstOffload, UploadPolicy::kNever}) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown upload policy '" + std::string(s) + "'");
}

WireEncoding parse_wire_precision(std::string_view s) {
  if (s == "f16") return WireEncoding::kF16;
  if (s == "f32") return WireEncoding::kF32;
  throw std::invalid_argument("wire precision must be f16 or f32, got '" + std::string(s) + "'");
}

void EdgeConfig::validate() const {
  if (std::isnan(theta) || theta < 0.0) throw std::invalid_argument("theta must be >= 0");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (upload_queue_capacity < 1) throw std::invalid_argument("upload_queue_capacity must be >= 1");
  if (mode == Mode::kStandalone && upload_policy != UploadPolicy::kNever) {
    throw std::invalid_argument("standalone mode has no cloud; upload_policy must be never");
  }
}

// ---------------------------------------------------------------------------

EdgeSequence::EdgeSequence(const model::EdgePartition& partition, const ComputeTiming& timing)
    : partition_(&partition), timing_(timing) {
  const auto& cfg = partition.config;
  std::uint32_t begin = 0;
  for (std::uint32_t e : cfg.exit_layers) {
    if (e > begin) segments_.push_back({begin, e});
    begin = e;
  }
  if (begin < cfg.split_layer) segments_.push_back({begin, cfg.split_layer});
  for (auto r : segments_) caches_.emplace_back(cfg, r);
}

StepResult EdgeSequence::step(std::span<const TokenId> tokens, std::uint32_t first_position,
                              std::optional<double> theta) {
  const auto& cfg = partition_->config;
  if (tokens.empty()) throw std::invalid_argument("step needs at least one token");
  if (first_position != length_) {
    throw EdgeError(std::nullopt, "edge step at position " + std::to_string(first_position) +
                                      " but the edge cache holds " + std::to_string(length_));
  }
  if (static_cast<std::uint64_t>(first_position) + tokens.size() > cfg.max_seq_len) {
    throw EdgeError(codec::ErrorCode::kSequenceOverflow, "sequence would exceed max_seq_len");
  }

  StepResult out;
  std::uint64_t heads = 0;
  const auto t0 = std::chrono::steady_clock::now();

  auto stack = partition_->stack();
  model::HiddenStateBlock x = model::embed(cfg, partition_->embedding, tokens, first_position);
  const std::uint32_t last = x.num_positions() - 1;
  std::size_t next_exit = 0;
  auto evaluate_exits_at = [&](std::uint32_t layer) {
    while (next_exit < cfg.exit_layers.size() && cfg.exit_layers[next_exit] == layer) {
      const std::size_t j = next_exit++;
      if (!theta || out.decided) continue;
      const auto c = model::confidence(model::apply_head(cfg, partition_->exits[j], x.row(last)));
      ++heads;
      out.evaluations.push_back({j, c.conf, c.token});
      if (model::passes_threshold(c.conf, *theta)) out.decided = out.evaluations.back();
    }
  };
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    x = stack.forward(segments_[s], x, caches_[s]);
    evaluate_exits_at(segments_[s].end);
  }
  x.layer = cfg.split_layer;
  out.split = std::move(x);

  length_ += static_cast<std::uint32_t>(tokens.size());
  head_evaluations_ += heads;
  out.compute = timing_.measured
                    ? std::chrono::duration_cast<SimTime>(std::chrono::steady_clock::now() - t0)
                    : timing_.edge.of(static_cast<std::uint64_t>(tokens.size()) * cfg.split_layer, heads);
  return out;
}

// ---------------------------------------------------------------------------

AsyncUploader::AsyncUploader(transport::Endpoint& endpoint, std::uint64_t session_id,
                             std::uint16_t layer, std::uint32_t hidden_dim, WireEncoding encoding,
                             std::size_t capacity, std::uint32_t max_positions)
    : endpoint_(endpoint),
      session_id_(session_id),
      layer_(layer),
      hidden_dim_(hidden_dim),
      encoding_(encoding),
      capacity_(std::max<std::size_t>(capacity, 1)),
      sent_(max_positions, false),
      thread_([this] { loop(); }) {}

AsyncUploader::~AsyncUploader() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

void AsyncUploader::enqueue(model::HiddenStateBlock block, SimTime at) {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return queue_.size() < capacity_ || failure_; });
  if (failure_) std::rethrow_exception(failure_);
  queue_.push_back({std::move(block), at});
  cv_.notify_all();
}

void AsyncUploader::flush() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return (queue_.empty() && !busy_) || failure_; });
  if (failure_) std::rethrow_exception(failure_);
}

std::uint64_t AsyncUploader::frames_sent() const {
  std::lock_guard lk(mu_);
  return frames_;
}

std::uint64_t AsyncUploader::positions_sent() const {
  std::lock_guard lk(mu_);
  return positions_;
}

void AsyncUploader::loop() {
  std::unique_lock lk(mu_);
  while (true) {
    cv_.wait(lk, [&] { return stop_ || !queue_.empty(); });
    if (queue_.empty()) return;
    Item item = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    cv_.notify_all();
    if (!failure_) {
      lk.unlock();
      std::exception_ptr err;
      try {
        send_block(item);
      } catch (...) {
        err = std::current_exception();
      }
      lk.lock();
      if (err) failure_ = err;
    }
    busy_ = false;
    cv_.notify_all();
  }
}

// Only this thread touches sent_; the counters are read under mu_.
void AsyncUploader::send_block(const Item& item) {
  const auto& b = item.block;
  const std::uint32_t n = b.num_positions();
  std::uint32_t i = 0;
  while (i < n) {
    const std::uint32_t pos = b.first_position + i;
    if (pos >= sent_.size()) throw EdgeError(codec::ErrorCode::kSequenceOverflow, "upload past max_seq_len");
    if (sent_[pos]) {
      ++i;
      continue;
    }
    std::uint32_t j = i;
    while (j < n && b.first_position + j < sent_.size() && !sent_[b.first_position + j]) ++j;
    const std::span<const float> rows(b.activations.data() + static_cast<std::size_t>(i) * hidden_dim_,
                                      static_cast<std::size_t>(j - i) * hidden_dim_);
    auto up = codec::make_context_upload(layer_, pos, hidden_dim_, rows, encoding_);
    endpoint_.send(codec::encode_message(session_id_, up), item.at);
    for (std::uint32_t q = i; q < j; ++q) sent_[b.first_position + q] = true;
    {
      std::lock_guard lk(mu_);
      frames_ += 1;
      positions_ += j - i;
    }
    i = j;
  }
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

model::HiddenStateBlock merge(std::vector<model::HiddenStateBlock>& blocks) {
  model::HiddenStateBlock out = std::move(blocks.front());
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    out.activations.insert(out.activations.end(), blocks[i].activations.begin(), blocks[i].activations.end());
  }
  blocks.clear();
  return out;
}

}  // namespace

EdgeClient::EdgeClient(std::shared_ptr<const model::Model> model, EdgeConfig config,
                       std::shared_ptr<transport::Endpoint> endpoint, std::uint64_t session_seed)
    : model_(std::move(model)), config_(config), endpoint_(std::move(endpoint)), session_state_(session_seed) {
  if (!model_) throw std::invalid_argument("EdgeClient needs a model");
  config_.validate();
  split_ = config_.split_layer == 0 ? model_->config.split_layer : config_.split_layer;
  partition_ = model::split(*model_, split_).first;
  hash_ = model::model_hash(*model_);
}

std::uint64_t EdgeClient::next_session_id() { return splitmix64(session_state_); }

SimTime EdgeClient::now() const {
  return endpoint_ && !endpoint_->simulated() ? endpoint_->now() : clock_;
}

void EdgeClient::advance(SimTime spent) { clock_ += spent; }

void EdgeClient::settle(SimTime t) { clock_ = std::max(clock_, t); }

transport::Endpoint& EdgeClient::link(const char* what) {
  if (!endpoint_) throw EdgeError(std::nullopt, std::string(what) + " mode needs a cloud connection");
  return *endpoint_;
}

void EdgeClient::send(std::uint64_t session, const codec::Message& m) { send_timed(session, m); }

transport::Delivery EdgeClient::send_timed(std::uint64_t session, const codec::Message& m) {
  return link("this").send(codec::encode_message(session, m), now());
}

EdgeClient::Reply EdgeClient::await(std::uint64_t session) {
  auto& ep = link("this");
  while (true) {
    auto frame = ep.recv();
    if (!frame) throw EdgeError(std::nullopt, "connection closed by the cloud");
    codec::Envelope env;
    try {
      env = codec::decode_message(frame->frame);
    } catch (const codec::DecodeError& e) {
      throw EdgeError(e.code(), std::string("undecodable frame from the cloud: ") + e.what());
    }
    // Errors for earlier sessions (e.g. a rejected upload nobody waited on).
    if (env.session_id != session) continue;
    return {std::move(env.message), std::move(*frame)};
  }
}

void EdgeClient::check_prompt(std::span<const TokenId> prompt, std::uint32_t extra) const {
  const auto& cfg = model_->config;
  if (prompt.empty()) throw std::invalid_argument("prompt must be non-empty");
  for (TokenId t : prompt) {
    if (t >= cfg.vocab_size) throw std::invalid_argument("prompt token " + std::to_string(t) + " outside vocabulary");
  }
  if (prompt.size() + extra > cfg.max_seq_len) {
    throw EdgeError(codec::ErrorCode::kSequenceOverflow,
                    "prompt length " + std::to_string(prompt.size()) + " + " + std::to_string(extra) +
                        " new tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
}

RunResult EdgeClient::begin(Mode mode) {
  RunResult r;
  r.mode = mode;
  r.start = now();
  return r;
}

void EdgeClient::finish(RunResult& r, const transport::TransferLedger& before) {
  r.end = now();
  r.timeline.total = r.end - r.start;
  if (endpoint_) {
    const auto after = endpoint_->ledger();
    r.bytes_up = after.bytes_up - before.bytes_up;
    r.bytes_down = after.bytes_down - before.bytes_down;
  }
}

RunResult EdgeClient::run(std::span<const TokenId> prompt) {
  switch (config_.mode) {
    case Mode::kStandalone: return run_standalone(prompt);
    case Mode::kCollaborative: return run_collaborative(prompt);
    case Mode::kNaiveSplit: return run_naive_split(prompt);
    case Mode::kCloudOnly: return run_cloud_only(prompt);
  }
  throw std::logic_error("unreachable");
}

RunResult EdgeClient::run_standalone(std::span<const TokenId> prompt) {
  check_prompt(prompt, config_.max_new_tokens);
  if (partition_.exits.empty()) throw EdgeError(std::nullopt, "standalone mode needs at least one exit");
  const transport::TransferLedger before = endpoint_ ? endpoint_->ledger() : transport::TransferLedger{};
  RunResult r = begin(Mode::kStandalone);
  EdgeSequence seq(partition_, config_.timing);
  const auto& cfg = model_->config;

  StepResult st = seq.step(prompt, 0, config_.theta);
  auto pos = static_cast<std::uint32_t>(prompt.size());
  for (std::uint32_t i = 0; i < config_.max_new_tokens; ++i) {
    advance(st.compute);
    r.timeline.edge += st.compute;
    const ExitEval pick = st.decided ? *st.decided : st.evaluations.back();
    TokenTrace tr;
    tr.position = pos;
    tr.token = pick.token;
    tr.exit_index = pick.exit_index;
    tr.evaluations = std::move(st.evaluations);
    tr.edge_time = st.compute;
    r.tokens.push_back(pick.token);
    r.trace.push_back(std::move(tr));
    if (model::is_eos(cfg, pick.token) || i + 1 == config_.max_new_tokens) break;
    const TokenId next[1] = {pick.token};
    st = seq.step(next, pos, config_.theta);
    ++pos;
  }
  r.head_evaluations = seq.head_evaluations();
  finish(r, before);
  return r;
}

RunResult EdgeClient::run_collaborative(std::span<const TokenId> prompt) {
  check_prompt(prompt, config_.max_new_tokens);
  auto& ep = link("collaborative");
  const transport::TransferLedger before = ep.ledger();
  RunResult r = begin(Mode::kCollaborative);
  EdgeSequence seq(partition_, config_.timing);
  const auto& cfg = model_->config;

  std::uint64_t id = 0;
  std::unique_ptr<AsyncUploader> uploader;
  auto open = [&] {
    if (uploader) return;
    id = next_session_id();
    send(id, codec::OpenSession{hash_, {}});
    uploader = std::make_unique<AsyncUploader>(ep, id, static_cast<std::uint16_t>(split_), cfg.hidden_dim,
                                               config_.wire_precision, config_.upload_queue_capacity,
                                               cfg.max_seq_len);
  };
  bool streaming = config_.upload_policy == UploadPolicy::kAlways;
  std::vector<model::HiddenStateBlock> held;
  auto hand_off = [&](model::HiddenStateBlock b) {
    if (streaming) {
      open();
      uploader->enqueue(std::move(b), now());
    } else {
      held.push_back(std::move(b));
    }
  };
  auto ingest = [&](StepResult& st) {
    advance(st.compute);
    r.timeline.edge += st.compute;
    hand_off(std::move(st.split));
  };

  StepResult st = seq.step(prompt, 0, config_.theta);
  const SimTime prompt_compute = st.compute;
  std::vector<ExitEval> evals = st.evaluations;
  std::optional<ExitEval> decided = st.decided;
  ingest(st);
  SimTime step_compute = prompt_compute;
  auto pos = static_cast<std::uint32_t>(prompt.size());

  for (std::uint32_t i = 0; i < config_.max_new_tokens; ++i) {
    TokenTrace tr;
    tr.position = pos;
    tr.evaluations = std::move(evals);
    tr.edge_time = step_compute;
    if (decided) {
      tr.token = decided->token;
      tr.exit_index = decided->exit_index;
    } else {
      tr.cloud = true;
      open();
      if (!held.empty()) uploader->enqueue(merge(held), now());
      if (config_.upload_policy == UploadPolicy::kOnFirstOffload) streaming = true;
      uploader->flush();
      const SimTime sent_at = now();
      const codec::InferRequest req{pos - 1};
      send(id, req);
      r.cloud_requests += 1;
      std::optional<codec::InferResponse> resp;
      for (int attempt = 0; !resp; ++attempt) {
        Reply reply = await(id);
        settle(reply.frame.delivery);
        if (auto* ok = std::get_if<codec::InferResponse>(&reply.message)) {
          resp = *ok;
        } else if (auto* err = std::get_if<codec::Error>(&reply.message)) {
          if (err->code == codec::ErrorCode::kContextTimeout && attempt == 0) {
            r.context_retries += 1;
            uploader->flush();
            send(id, req);
            continue;
          }
          throw EdgeError(err->code, "cloud error at position " + std::to_string(pos - 1) + ": " +
                                         std::string(codec::to_string(err->code)) + ": " + err->detail);
        } else {
          throw EdgeError(codec::ErrorCode::kMalformedPayload, "unexpected message from the cloud");
        }
      }
      tr.token = resp->token;
      tr.cloud_compute = SimTime(static_cast<SimTime::rep>(resp->cloud_compute_ns));
      tr.cloud_round_trip = now() - sent_at;
      r.timeline.cloud += tr.cloud_compute;
      r.timeline.comm += tr.cloud_round_trip - tr.cloud_compute;
    }
    const TokenId token = tr.token;
    r.tokens.push_back(token);
    r.trace.push_back(std::move(tr));
    const bool last = model::is_eos(cfg, token) || i + 1 == config_.max_new_tokens;
    // The last token is still pushed through the edge layers when its
    // activation will be uploaded, so the cloud holds the whole sequence.
    if (last && !streaming) break;
    const TokenId next[1] = {token};
    st = seq.step(next, pos, last ? std::nullopt : std::optional<double>(config_.theta));
    step_compute = st.compute;
    evals = st.evaluations;
    decided = st.decided;
    ingest(st);
    ++pos;
    if (last) break;
  }

  if (uploader) {
    uploader->flush();
    r.uploaded_positions = uploader->positions_sent();
    r.upload_frames = uploader->frames_sent();
    send(id, codec::CloseSession{});
    uploader.reset();
  }
  r.head_evaluations = seq.head_evaluations();
  finish(r, before);
  return r;
}

RunResult EdgeClient::run_naive_split(std::span<const TokenId> prompt) {
  check_prompt(prompt, config_.max_new_tokens);
  auto& ep = link("naive-split");
  const transport::TransferLedger before = ep.ledger();
  RunResult r = begin(Mode::kNaiveSplit);
  EdgeSequence seq(partition_, config_.timing);
  const auto& cfg = model_->config;

  StepResult st = seq.step(prompt, 0, std::nullopt);
  advance(st.compute);
  r.timeline.edge += st.compute;
  std::vector<float> prefix = std::move(st.split.activations);
  SimTime step_compute = st.compute;
  auto pos = static_cast<std::uint32_t>(prompt.size());

  for (std::uint32_t i = 0; i < config_.max_new_tokens; ++i) {
    // Stateless cloud: a fresh session per token carrying the whole prefix.
    const std::uint64_t id = next_session_id();
    const SimTime sent_at = now();
    send(id, codec::OpenSession{hash_, {}});
    send(id, codec::make_context_upload(static_cast<std::uint16_t>(split_), 0, cfg.hidden_dim, prefix,
                                        WireEncoding::kF32));
    send(id, codec::InferRequest{pos - 1});
    r.cloud_requests += 1;
    r.uploaded_positions += pos;
    r.upload_frames += 1;
    Reply reply = await(id);
    settle(reply.frame.delivery);
    send(id, codec::CloseSession{});
    auto* resp = std::get_if<codec::InferResponse>(&reply.message);
    if (!resp) {
      if (auto* err = std::get_if<codec::Error>(&reply.message)) {
        throw EdgeError(err->code, "cloud error at position " + std::to_string(pos - 1) + ": " + err->detail);
      }
      throw EdgeError(codec::ErrorCode::kMalformedPayload, "unexpected message from the cloud");
    }
    TokenTrace tr;
    tr.position = pos;
    tr.token = resp->token;
    tr.cloud = true;
    tr.edge_time = step_compute;
    tr.cloud_compute = SimTime(static_cast<SimTime::rep>(resp->cloud_compute_ns));
    tr.cloud_round_trip = now() - sent_at;
    r.timeline.cloud += tr.cloud_compute;
    r.timeline.comm += tr.cloud_round_trip - tr.cloud_compute;
    r.tokens.push_back(tr.token);
    r.trace.push_back(tr);
    if (model::is_eos(cfg, tr.token) || i + 1 == config_.max_new_tokens) break;
    const TokenId next[1] = {tr.token};
    st = seq.step(next, pos, std::nullopt);
    advance(st.compute);
    r.timeline.edge += st.compute;
    step_compute = st.compute;
    prefix.insert(prefix.end(), st.split.activations.begin(), st.split.activations.end());
    ++pos;
  }
  finish(r, before);
  return r;
}

RunResult EdgeClient::run_cloud_only(std::span<const TokenId> prompt) {
  check_prompt(prompt, config_.max_new_tokens);
  auto& ep = link("cloud-only");
  const transport::TransferLedger before = ep.ledger();
  RunResult r = begin(Mode::kCloudOnly);
  const auto& cfg = model_->config;
  const auto p = static_cast<std::uint32_t>(prompt.size());

  const std::uint64_t id = next_session_id();
  const SimTime sent_at = now();
  send(id, codec::OpenSession{hash_, std::vector<std::uint32_t>(prompt.begin(), prompt.end())});
  send(id, codec::InferRequest{p + config_.max_new_tokens - 1});
  r.cloud_requests = 1;
  SimTime prev = sent_at;
  while (r.tokens.size() < config_.max_new_tokens) {
    Reply reply = await(id);
    settle(reply.frame.delivery);
    auto* resp = std::get_if<codec::InferResponse>(&reply.message);
    if (!resp) {
      if (auto* err = std::get_if<codec::Error>(&reply.message)) {
        throw EdgeError(err->code, "cloud error: " + std::string(codec::to_string(err->code)) + ": " + err->detail);
      }
      throw EdgeError(codec::ErrorCode::kMalformedPayload, "unexpected message from the cloud");
    }
    TokenTrace tr;
    tr.position = p + static_cast<std::uint32_t>(r.tokens.size());
    tr.token = resp->token;
    tr.cloud = true;
    tr.cloud_compute = SimTime(static_cast<SimTime::rep>(resp->cloud_compute_ns));
    tr.cloud_round_trip = now() - prev;
    prev = now();
    r.timeline.cloud += tr.cloud_compute;
    r.tokens.push_back(tr.token);
    r.trace.push_back(tr);
    if (model::is_eos(cfg, tr.token)) break;
  }
  send(id, codec::CloseSession{});
  r.timeline.comm = (now() - sent_at) - r.timeline.cloud;
  finish(r, before);
  return r;
}

}  // namespace cecollm::edge
