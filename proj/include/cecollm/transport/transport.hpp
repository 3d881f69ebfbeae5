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
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace cecollm::transport {

// Nanoseconds since an endpoint-specific epoch. Virtual on the simulated link,
// steady-clock time on sockets.
using SimTime = std::chrono::nanoseconds;

inline double to_seconds(SimTime t) { return std::chrono::duration<double>(t).count(); }
inline SimTime from_seconds(double s) {
  return std::chrono::duration_cast<SimTime>(std::chrono::duration<double>(s));
}

enum class Direction : std::uint8_t { kUp, kDown };  // up = edge -> cloud

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LinkParams {
  double bandwidth_bytes_per_s = 12.5e6;  // 100 Mbit/s
  SimTime rtt = std::chrono::milliseconds(20);
  SimTime jitter{0};  // extra one-way delay drawn uniformly from [0, jitter]
  std::uint64_t jitter_seed = 0;

  static LinkParams from_cli(double bandwidth_mbps, double rtt_ms, double jitter_ms = 0.0);
  // Transmission time of `bytes` at this bandwidth, rounded to the nanosecond.
  SimTime serialization_time(std::size_t bytes) const;
  void validate() const;
};

struct TransferEvent {
  Direction direction = Direction::kUp;
  std::size_t bytes = 0;
  SimTime enqueue{0};
  SimTime delivery{0};
};

struct TransferLedger {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::vector<TransferEvent> events;

  std::uint64_t total_bytes() const { return bytes_up + bytes_down; }
  std::uint64_t frames(Direction d) const;
};

struct Delivery {
  SimTime enqueue{0};
  SimTime delivery{0};
};

struct Received {
  std::vector<std::uint8_t> frame;
  SimTime enqueue{0};
  SimTime delivery{0};
};

// One side of a reliable, in-order, frame-granular connection.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  // `at` is the sender's clock reading; socket endpoints substitute their own.
  virtual Delivery send(std::vector<std::uint8_t> frame, SimTime at) = 0;
  // Blocks for the next frame; nullopt once the peer has closed and the
  // stream is drained, or the link is shut down.
  virtual std::optional<Received> recv() = 0;
  virtual void close() = 0;
  virtual TransferLedger ledger() const = 0;
  virtual bool simulated() const = 0;
  // Current time on this endpoint's clock (meaningful for sockets only).
  virtual SimTime now() const = 0;
};

// In-process link with virtual time. Each direction serialises frames: a frame
// starts transmitting at max(enqueue, end of the previous frame), occupies the
// link for bytes/bandwidth, and arrives rtt/2 (+ jitter) later. Both endpoints
// share one ledger.
class SimLink {
 public:
  explicit SimLink(LinkParams params);
  ~SimLink();
  SimLink(const SimLink&) = delete;
  SimLink& operator=(const SimLink&) = delete;

  std::shared_ptr<Endpoint> client_endpoint();
  std::shared_ptr<Endpoint> server_endpoint();
  // Wakes every blocked recv and rejects further sends.
  void shutdown();
  TransferLedger ledger() const;
  const LinkParams& params() const;

  struct State;

 private:
  std::shared_ptr<State> state_;
};

// Stream endpoint over a pair of file descriptors (a TCP socket, or pipes).
// Owns the descriptors.
class StreamEndpoint final : public Endpoint {
 public:
  StreamEndpoint(int read_fd, int write_fd, Direction send_direction);
  ~StreamEndpoint() override;

  Delivery send(std::vector<std::uint8_t> frame, SimTime at) override;
  std::optional<Received> recv() override;
  void close() override;
  TransferLedger ledger() const override;
  bool simulated() const override { return false; }
  SimTime now() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<StreamEndpoint> connect_tcp(const std::string& host, std::uint16_t port);

class TcpListener {
 public:
  // Port 0 picks an ephemeral port.
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // Returns nullptr once the listener is closed.
  std::unique_ptr<StreamEndpoint> accept();
  void close();

 private:
  std::atomic<int> fd_{-1};
  std::uint16_t port_ = 0;
};

// "host:port" -> (host, port). Throws std::invalid_argument.
std::pair<std::string, std::uint16_t> parse_address(const std::string& address);

}  // namespace cecollm::transport
