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

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cecollm/codec/message.hpp"
#include "cecollm/model/model.hpp"
#include "cecollm/model/model_io.hpp"
#include "cecollm/timing.hpp"
#include "cecollm/transport/transport.hpp"

namespace cecollm::edge {

using model::TokenId;

enum class Mode { kStandalone, kCollaborative, kNaiveSplit, kCloudOnly };
enum class UploadPolicy { kAlways, kOnFirstOffload, kNever };

std::string_view to_string(Mode m);
std::string_view to_string(UploadPolicy p);
Mode parse_mode(std::string_view s);
UploadPolicy parse_upload_policy(std::string_view s);
codec::WireEncoding parse_wire_precision(std::string_view s);

struct EdgeConfig {
  double theta = 0.8;  // > 1 offloads every token
  Mode mode = Mode::kCollaborative;
  UploadPolicy upload_policy = UploadPolicy::kAlways;
  codec::WireEncoding wire_precision = codec::WireEncoding::kF16;
  std::uint32_t max_new_tokens = 100;
  std::size_t upload_queue_capacity = 8;
  // 0 uses the model file's split layer.
  std::uint32_t split_layer = 0;
  ComputeTiming timing;

  // Throws std::invalid_argument.
  void validate() const;
};

class EdgeError : public std::runtime_error {
 public:
  EdgeError(std::optional<codec::ErrorCode> code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  // Set when the cloud answered with an Error message.
  std::optional<codec::ErrorCode> code() const { return code_; }

 private:
  std::optional<codec::ErrorCode> code_;
};

struct ExitEval {
  std::size_t exit_index = 0;
  double conf = 0.0;
  TokenId token = 0;
};

struct TokenTrace {
  std::uint32_t position = 0;  // where the token lands in the sequence
  TokenId token = 0;
  std::optional<std::size_t> exit_index;  // set iff decided on the edge
  bool cloud = false;
  std::vector<ExitEval> evaluations;  // in layer order, up to the deciding exit
  SimTime edge_time{0};
  SimTime cloud_round_trip{0};
  SimTime cloud_compute{0};
};

// total == edge + comm + cloud on the simulated link.
struct Timeline {
  SimTime total{0};
  SimTime edge{0};
  SimTime comm{0};
  SimTime cloud{0};
};

struct RunResult {
  Mode mode = Mode::kCollaborative;
  std::vector<TokenId> tokens;
  std::vector<TokenTrace> trace;
  Timeline timeline;
  SimTime start{0};
  SimTime end{0};
  std::uint64_t bytes_up = 0;  // framed, from the transport ledger
  std::uint64_t bytes_down = 0;
  std::uint64_t cloud_requests = 0;
  std::uint64_t uploaded_positions = 0;
  std::uint64_t upload_frames = 0;
  std::uint64_t head_evaluations = 0;
  std::uint32_t context_retries = 0;

  // Share of generated tokens the cloud produced. Cloud-only streams every
  // token from one request, so this is not cloud_requests / tokens there.
  double cloud_request_rate() const {
    if (tokens.empty()) return 0.0;
    const auto n = std::count_if(trace.begin(), trace.end(), [](const TokenTrace& t) { return t.cloud; });
    return static_cast<double>(n) / static_cast<double>(tokens.size());
  }
};

struct StepResult {
  model::HiddenStateBlock split;  // activations leaving layer k
  std::vector<ExitEval> evaluations;
  std::optional<ExitEval> decided;  // first exit with conf >= theta
  SimTime compute{0};
};

// Edge partition state for one sequence: one KV cache per run of layers
// between exit points.
class EdgeSequence {
 public:
  EdgeSequence(const model::EdgePartition& partition, const ComputeTiming& timing);

  // Runs layers [0, k) over tokens placed at first_position. With a theta,
  // exits are evaluated at the last row in layer order and evaluation stops
  // at the first confident one; without, no head runs. The caches always
  // advance through layer k - 1.
  StepResult step(std::span<const TokenId> tokens, std::uint32_t first_position,
                  std::optional<double> theta);

  std::uint32_t length() const { return length_; }
  std::uint64_t head_evaluations() const { return head_evaluations_; }

 private:
  const model::EdgePartition* partition_;
  ComputeTiming timing_;
  std::vector<model::LayerRange> segments_;
  std::vector<model::KVCache> caches_;
  std::uint32_t length_ = 0;
  std::uint64_t head_evaluations_ = 0;
};

// Background sender of split-layer activations for one session. Positions
// already sent are trimmed, so each goes out at most once.
class AsyncUploader {
 public:
  AsyncUploader(transport::Endpoint& endpoint, std::uint64_t session_id, std::uint16_t layer,
                std::uint32_t hidden_dim, codec::WireEncoding encoding, std::size_t capacity,
                std::uint32_t max_positions);
  ~AsyncUploader();
  AsyncUploader(const AsyncUploader&) = delete;
  AsyncUploader& operator=(const AsyncUploader&) = delete;

  // Blocks while the queue is full. `at` is the edge clock when the block
  // became available.
  void enqueue(model::HiddenStateBlock block, SimTime at);
  // Returns once everything enqueued so far is on the link. Rethrows a send
  // failure.
  void flush();

  std::uint64_t frames_sent() const;
  std::uint64_t positions_sent() const;

 private:
  struct Item {
    model::HiddenStateBlock block;
    SimTime at{0};
  };
  void loop();
  void send_block(const Item& item);

  transport::Endpoint& endpoint_;
  std::uint64_t session_id_;
  std::uint16_t layer_;
  std::uint32_t hidden_dim_;
  codec::WireEncoding encoding_;
  std::size_t capacity_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> queue_;
  bool busy_ = false;
  bool stop_ = false;
  std::exception_ptr failure_;
  std::vector<bool> sent_;
  std::uint64_t frames_ = 0;
  std::uint64_t positions_ = 0;
  std::thread thread_;
};

// Drives one edge device. Runs are sequential; the client keeps one clock
// across them so consecutive runs share the link's timeline.
class EdgeClient {
 public:
  // `endpoint` may be null for standalone runs.
  EdgeClient(std::shared_ptr<const model::Model> model, EdgeConfig config,
             std::shared_ptr<transport::Endpoint> endpoint, std::uint64_t session_seed = 1);

  const EdgeConfig& config() const { return config_; }
  std::uint32_t split_layer() const { return split_; }

  RunResult run(std::span<const TokenId> prompt);
  RunResult run_standalone(std::span<const TokenId> prompt);
  RunResult run_collaborative(std::span<const TokenId> prompt);
  RunResult run_naive_split(std::span<const TokenId> prompt);
  RunResult run_cloud_only(std::span<const TokenId> prompt);

  SimTime clock() const { return clock_; }

 private:
  struct Reply {
    codec::Message message;
    transport::Received frame;
  };
  std::uint64_t next_session_id();
  SimTime now() const;
  void advance(SimTime spent);
  void settle(SimTime t);
  void send(std::uint64_t session, const codec::Message& m);
  transport::Delivery send_timed(std::uint64_t session, const codec::Message& m);
  Reply await(std::uint64_t session);
  void check_prompt(std::span<const TokenId> prompt, std::uint32_t extra) const;
  RunResult begin(Mode mode);
  void finish(RunResult& r, const transport::TransferLedger& before);
  transport::Endpoint& link(const char* what);

  std::shared_ptr<const model::Model> model_;
  EdgeConfig config_;
  std::shared_ptr<transport::Endpoint> endpoint_;
  std::uint32_t split_ = 0;
  model::EdgePartition partition_;
  model::ModelHash hash_{};
  std::uint64_t session_state_;
  SimTime clock_{0};
};

}  // namespace cecollm::edge
