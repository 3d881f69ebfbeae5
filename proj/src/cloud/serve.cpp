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

#include <condition_variable>
#include <deque>
#include <stop_token>

#include "cecollm/cloud/server.hpp"

namespace cecollm::cloud {

namespace {

// Runs posted jobs one at a time on its own thread.
class SerialWorker {
 public:
  SerialWorker() : thread_([this] { loop(); }) {}
  ~SerialWorker() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }

  void post(std::function<void()> job) {
    {
      std::lock_guard lk(mu_);
      jobs_.push_back(std::move(job));
    }
    cv_.notify_all();
  }

  void drain() {
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [&] { return jobs_.empty() && !busy_; });
  }

 private:
  void loop() {
    std::unique_lock lk(mu_);
    while (true) {
      cv_.wait(lk, [&] { return stop_ || !jobs_.empty(); });
      if (jobs_.empty()) return;
      auto job = std::move(jobs_.front());
      jobs_.pop_front();
      busy_ = true;
      lk.unlock();
      job();
      lk.lock();
      busy_ = false;
      idle_cv_.notify_all();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_, idle_cv_;
  std::deque<std::function<void()>> jobs_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace

void serve_connection(CloudServer& server, transport::Endpoint& endpoint) {
  const bool sim = endpoint.simulated();
  std::unordered_map<std::uint64_t, std::unique_ptr<SerialWorker>> workers;
  SimTime last_sweep{0};

  auto send = [&endpoint](std::uint64_t id, const codec::Message& m, SimTime at) {
    try {
      endpoint.send(codec::encode_message(id, m), at);
    } catch (const transport::TransportError&) {
      // Peer went away; nothing left to tell it.
    }
  };
  auto worker_for = [&](std::uint64_t id) -> SerialWorker& {
    auto& w = workers[id];
    if (!w) w = std::make_unique<SerialWorker>();
    return *w;
  };

  while (true) {
    std::optional<transport::Received> frame;
    try {
      frame = endpoint.recv();
    } catch (const codec::DecodeError& e) {
      // The byte stream is no longer frame-aligned; report and drop the connection.
      send(0, codec::Error{e.code(), e.what()}, server.clock_now());
      break;
    } catch (const transport::TransportError&) {
      break;
    }
    if (!frame) break;
    const SimTime now = sim ? frame->delivery : server.clock_now();
    if (sim && now - last_sweep >= server.config().eviction.sweep_interval) {
      server.evict(now);
      last_sweep = now;
    }

    codec::Envelope env;
    try {
      env = codec::decode_message(frame->frame);
    } catch (const codec::DecodeError& e) {
      std::uint64_t id = 0;
      try {
        id = codec::decode_header(frame->frame).session_id;
      } catch (const codec::DecodeError&) {
      }
      send(id, codec::Error{e.code(), e.what()}, now);
      continue;
    }

    const std::uint64_t id = env.session_id;
    if (auto* m = std::get_if<codec::OpenSession>(&env.message)) {
      if (auto err = server.open_session(id, *m, now)) send(id, *err, now);
    } else if (auto* m = std::get_if<codec::ContextUpload>(&env.message)) {
      if (auto err = server.upload(id, *m, now)) send(id, *err, now);
    } else if (auto* m = std::get_if<codec::InferRequest>(&env.message)) {
      const codec::InferRequest req = *m;
      worker_for(id).post([&server, &send, id, req, now] {
        if (server.config().mode == ServerMode::kFull) {
          auto err = server.full_model_infer(id, req, now,
                                             [&](const Reply& r) { send(id, r.message, r.ready); });
          if (err) send(id, err->message, err->ready);
        } else {
          Reply r = server.infer(id, req, now);
          send(id, r.message, r.ready);
        }
      });
    } else if (std::holds_alternative<codec::CloseSession>(env.message)) {
      if (auto it = workers.find(id); it != workers.end()) {
        it->second->drain();
        workers.erase(it);
      }
      server.close_session(id);
    } else {
      send(id, codec::Error{codec::ErrorCode::kWrongMode, "clients may not send this message type"}, now);
    }
  }
  workers.clear();  // joins after finishing queued infers
  endpoint.close();
}

SimCloudHost::SimCloudHost(CloudServer& server, transport::LinkParams link)
    : link_(link), client_(link_.client_endpoint()), server_end_(link_.server_endpoint()) {
  thread_ = std::thread([&server, this] { serve_connection(server, *server_end_); });
}

SimCloudHost::~SimCloudHost() {
  finish();
  link_.shutdown();
}

void SimCloudHost::finish() {
  if (!thread_.joinable()) return;
  client_->close();
  thread_.join();
}

void serve_tcp(CloudServer& server, transport::TcpListener& listener) {
  std::vector<std::thread> connections;
  std::jthread sweeper([&server](std::stop_token stop) {
    std::mutex mu;
    std::condition_variable_any cv;
    std::unique_lock lk(mu);
    while (!stop.stop_requested()) {
      cv.wait_for(lk, stop, server.config().eviction.sweep_interval, [] { return false; });
      if (!stop.stop_requested()) server.evict(server.clock_now());
    }
  });
  while (auto conn = listener.accept()) {
    connections.emplace_back([&server, c = std::shared_ptr<transport::StreamEndpoint>(std::move(conn))] {
      serve_connection(server, *c);
    });
  }
  sweeper.request_stop();
  for (auto& t : connections) t.join();
}

}  // namespace cecollm::cloud
