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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cecollm/codec/message.hpp"
#include "cecollm/model/model.hpp"
#include "cecollm/model/model_io.hpp"
#include "cecollm/timing.hpp"
#include "cecollm/transport/transport.hpp"

namespace cecollm::cloud {

enum class ServerMode { kFull, kPartition };

struct EvictionPolicy {
  SimTime ttl = std::chrono::seconds(300);
  SimTime sweep_interval = std::chrono::seconds(30);
};

struct ServerConfig {
  ServerMode mode = ServerMode::kPartition;
  // Split layer for partition mode; 0 means the model file's split_layer.
  std::uint32_t split_layer = 0;
  EvictionPolicy eviction;
  // Bound on how long an infer request waits for its context rows. On the
  // simulated link the timeout is reported at this virtual offset while the
  // thread itself waits at most `context_wait_real`.
  SimTime context_timeout = std::chrono::seconds(10);
  std::chrono::milliseconds context_wait_real{50};
  ComputeTiming timing;
};

struct SessionStats {
  ServerMode mode = ServerMode::kPartition;
  std::uint32_t processed_upto = 0;
  std::uint32_t cached_len = 0;
  std::size_t pending_rows = 0;
  std::uint32_t min_pending_position = 0;  // meaningful when pending_rows > 0
  // Positions pushed through the cloud layers over the session's lifetime.
  std::uint64_t positions_computed = 0;
  std::uint64_t infer_count = 0;
  SimTime last_activity{0};
};

// A reply plus the time it leaves the server.
struct Reply {
  codec::Message message;
  SimTime ready{0};
};

// Per-session context manager and inference host. Thread-safe: uploads may
// run concurrently with a blocked infer on the same session; infers on one
// session are serialised.
class CloudServer {
 public:
  CloudServer(std::shared_ptr<const model::Model> model, ServerConfig config);
  ~CloudServer();

  const ServerConfig& config() const { return config_; }
  const model::ModelHash& model_hash() const { return hash_; }
  std::uint32_t split_layer() const { return split_; }
  std::uint32_t hidden_dim() const { return model_->config.hidden_dim; }

  std::optional<codec::Error> open_session(std::uint64_t id, const codec::OpenSession& m, SimTime now);
  std::optional<codec::Error> upload(std::uint64_t id, const codec::ContextUpload& m, SimTime arrival);
  // Partition mode. Blocks until rows [processed_upto, target] are present or
  // the context wait expires; returns InferResponse or Error.
  Reply infer(std::uint64_t id, const codec::InferRequest& m, SimTime arrival);
  // Full-model mode: emits one InferResponse per generated token until the
  // sequence reaches target_position + 1 tokens or emits EOS. Returns an
  // Error reply on failure, nullopt otherwise.
  std::optional<Reply> full_model_infer(std::uint64_t id, const codec::InferRequest& m, SimTime arrival,
                                        const std::function<void(const Reply&)>& emit);
  // Removes the session immediately; returns false if it did not exist.
  bool close_session(std::uint64_t id);
  // Drops sessions idle for longer than the TTL; returns how many.
  std::size_t evict(SimTime now);

  std::optional<SessionStats> stats(std::uint64_t id) const;
  std::size_t session_count() const;
  // Cloud layer-position computations across all sessions, closed ones included.
  std::uint64_t positions_computed() const { return positions_computed_.load(); }
  // Server-wide steady clock, used when frames carry no virtual timestamps.
  SimTime clock_now() const;

  struct Session;

 private:
  std::shared_ptr<Session> find(std::uint64_t id) const;
  void touch(Session& s, SimTime t);

  std::shared_ptr<const model::Model> model_;
  ServerConfig config_;
  std::uint32_t split_ = 0;
  model::ModelHash hash_{};
  std::optional<model::CloudPartition> partition_;
  std::chrono::steady_clock::time_point epoch_ = std::chrono::steady_clock::now();

  std::atomic<std::uint64_t> positions_computed_{0};
  mutable std::mutex sessions_mu_;
  std::unordered_map<std::uint64_t, std::shared_ptr<Session>> sessions_;
};

// Reads frames from one connection until it closes. Uploads are applied on the
// reading thread; infer requests run on a per-session worker so uploads keep
// flowing while an infer waits or computes.
void serve_connection(CloudServer& server, transport::Endpoint& endpoint);

// Hosts a CloudServer behind a simulated link on a background thread.
class SimCloudHost {
 public:
  SimCloudHost(CloudServer& server, transport::LinkParams link);
  ~SimCloudHost();
  SimCloudHost(const SimCloudHost&) = delete;
  SimCloudHost& operator=(const SimCloudHost&) = delete;

  transport::Endpoint& client() { return *client_; }
  std::shared_ptr<transport::Endpoint> client_ptr() { return client_; }
  transport::TransferLedger ledger() const { return link_.ledger(); }
  // Closes the client side and waits for the server loop to drain.
  void finish();

 private:
  transport::SimLink link_;
  std::shared_ptr<transport::Endpoint> client_;
  std::shared_ptr<transport::Endpoint> server_end_;
  std::thread thread_;
};

// Accepts connections until the listener closes, one serving thread each,
// plus a real-time eviction sweeper.
void serve_tcp(CloudServer& server, transport::TcpListener& listener);

}  // namespace cecollm::cloud
