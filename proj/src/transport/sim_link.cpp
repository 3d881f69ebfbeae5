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

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <random>

#include "cecollm/transport/transport.hpp"

namespace cecollm::transport {

LinkParams LinkParams::from_cli(double bandwidth_mbps, double rtt_ms, double jitter_ms) {
  LinkParams p;
  p.bandwidth_bytes_per_s = bandwidth_mbps * 1e6 / 8.0;
  p.rtt = from_seconds(rtt_ms / 1e3);
  p.jitter = from_seconds(jitter_ms / 1e3);
  p.validate();
  return p;
}

SimTime LinkParams::serialization_time(std::size_t bytes) const {
  return SimTime(std::llround(static_cast<double>(bytes) * 1e9 / bandwidth_bytes_per_s));
}

void LinkParams::validate() const {
  if (!(bandwidth_bytes_per_s > 0.0) || !std::isfinite(bandwidth_bytes_per_s)) {
    throw std::invalid_argument("link bandwidth must be positive");
  }
  if (rtt.count() < 0) throw std::invalid_argument("link rtt must be non-negative");
  if (jitter.count() < 0) throw std::invalid_argument("link jitter must be non-negative");
}

std::uint64_t TransferLedger::frames(Direction d) const {
  return static_cast<std::uint64_t>(
      std::count_if(events.begin(), events.end(), [d](const auto& e) { return e.direction == d; }));
}

struct SimLink::State {
  struct Lane {
    std::deque<Received> queue;
    SimTime tx_free{0};
    SimTime last_enqueue{0};
    SimTime last_delivery{0};
    bool closed = false;
  };

  explicit State(LinkParams p) : params(p), rng(p.jitter_seed) {}

  Lane& lane(Direction d) { return lanes[static_cast<int>(d)]; }

  LinkParams params;
  mutable std::mutex mu;
  std::condition_variable cv;
  Lane lanes[2];
  bool shut = false;
  TransferLedger ledger;
  std::mt19937_64 rng;
};

namespace {

class SimEndpoint final : public Endpoint {
 public:
  SimEndpoint(std::shared_ptr<SimLink::State> s, Direction send_dir) : s_(std::move(s)), dir_(send_dir) {}
  ~SimEndpoint() override { close(); }

  Delivery send(std::vector<std::uint8_t> frame, SimTime at) override {
    std::lock_guard lk(s_->mu);
    auto& lane = s_->lane(dir_);
    if (s_->shut) throw TransportError("simulated link is shut down");
    if (lane.closed) throw TransportError("connection closed");
    const auto& p = s_->params;
    const SimTime enqueue = std::max(at, lane.last_enqueue);
    const SimTime start = std::max(enqueue, lane.tx_free);
    const SimTime tx_end = start + p.serialization_time(frame.size());
    SimTime jitter{0};
    if (p.jitter.count() > 0) {
      jitter = SimTime(std::uniform_int_distribution<std::int64_t>(0, p.jitter.count())(s_->rng));
    }
    const SimTime delivery = std::max(tx_end + p.rtt / 2 + jitter, lane.last_delivery);
    lane.tx_free = tx_end;
    lane.last_enqueue = enqueue;
    lane.last_delivery = delivery;
    const std::size_t n = frame.size();
    (dir_ == Direction::kUp ? s_->ledger.bytes_up : s_->ledger.bytes_down) += n;
    s_->ledger.events.push_back({dir_, n, enqueue, delivery});
    lane.queue.push_back({std::move(frame), enqueue, delivery});
    s_->cv.notify_all();
    return {enqueue, delivery};
  }

  std::optional<Received> recv() override {
    std::unique_lock lk(s_->mu);
    auto& lane = s_->lane(dir_ == Direction::kUp ? Direction::kDown : Direction::kUp);
    s_->cv.wait(lk, [&] { return s_->shut || !lane.queue.empty() || lane.closed; });
    if (lane.queue.empty()) return std::nullopt;
    Received r = std::move(lane.queue.front());
    lane.queue.pop_front();
    return r;
  }

  void close() override {
    std::lock_guard lk(s_->mu);
    s_->lane(dir_).closed = true;
    s_->cv.notify_all();
  }

  TransferLedger ledger() const override {
    std::lock_guard lk(s_->mu);
    return s_->ledger;
  }

  bool simulated() const override { return true; }
  SimTime now() const override { return SimTime{0}; }

 private:
  std::shared_ptr<SimLink::State> s_;
  Direction dir_;
};

}  // namespace

SimLink::SimLink(LinkParams params) {
  params.validate();
  state_ = std::make_shared<State>(params);
}

SimLink::~SimLink() { shutdown(); }

std::shared_ptr<Endpoint> SimLink::client_endpoint() {
  return std::make_shared<SimEndpoint>(state_, Direction::kUp);
}

std::shared_ptr<Endpoint> SimLink::server_endpoint() {
  return std::make_shared<SimEndpoint>(state_, Direction::kDown);
}

void SimLink::shutdown() {
  std::lock_guard lk(state_->mu);
  state_->shut = true;
  state_->cv.notify_all();
}

TransferLedger SimLink::ledger() const {
  std::lock_guard lk(state_->mu);
  return state_->ledger;
}

const LinkParams& SimLink::params() const { return state_->params; }

}  // namespace cecollm::transport
