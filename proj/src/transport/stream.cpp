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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>

#include "cecollm/codec/message.hpp"
#include "cecollm/transport/transport.hpp"

namespace cecollm::transport {

namespace {

// False on orderly EOF before any byte was read.
bool read_exact(int fd, std::uint8_t* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::read(fd, dst + got, n - got);
    if (r == 0) {
      if (got == 0) return false;
      throw TransportError("stream closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      if (got == 0 && (errno == ECONNRESET || errno == EBADF)) return false;
      throw TransportError(std::string("read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_all(int fd, const std::uint8_t* src, std::size_t n) {
  std::size_t put = 0;
  while (put < n) {
    const ssize_t w = ::send(fd, src + put, n - put, MSG_NOSIGNAL);
    if (w < 0 && errno == ENOTSOCK) {
      const ssize_t w2 = ::write(fd, src + put, n - put);
      if (w2 < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write failed: ") + std::strerror(errno));
      }
      put += static_cast<std::size_t>(w2);
      continue;
    }
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("send failed: ") + std::strerror(errno));
    }
    put += static_cast<std::size_t>(w);
  }
}

}  // namespace

struct StreamEndpoint::Impl {
  int read_fd;
  int write_fd;
  Direction send_dir;
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
  std::mutex write_mu;
  mutable std::mutex ledger_mu;
  TransferLedger ledger;
  bool closed = false;

  SimTime now() const { return std::chrono::steady_clock::now() - epoch; }

  void record(Direction d, std::size_t n, SimTime enq, SimTime del) {
    std::lock_guard lk(ledger_mu);
    (d == Direction::kUp ? ledger.bytes_up : ledger.bytes_down) += n;
    ledger.events.push_back({d, n, enq, del});
  }
};

StreamEndpoint::StreamEndpoint(int read_fd, int write_fd, Direction send_direction)
    : impl_(std::make_unique<Impl>()) {
  impl_->read_fd = read_fd;
  impl_->write_fd = write_fd;
  impl_->send_dir = send_direction;
}

StreamEndpoint::~StreamEndpoint() {
  close();
  ::close(impl_->read_fd);
  if (impl_->write_fd != impl_->read_fd) ::close(impl_->write_fd);
}

Delivery StreamEndpoint::send(std::vector<std::uint8_t> frame, SimTime) {
  std::lock_guard lk(impl_->write_mu);
  if (impl_->closed) throw TransportError("connection closed");
  const SimTime enq = impl_->now();
  write_all(impl_->write_fd, frame.data(), frame.size());
  const SimTime done = impl_->now();
  impl_->record(impl_->send_dir, frame.size(), enq, done);
  return {enq, done};
}

std::optional<Received> StreamEndpoint::recv() {
  std::vector<std::uint8_t> frame(codec::kFrameHeaderSize);
  if (!read_exact(impl_->read_fd, frame.data(), frame.size())) return std::nullopt;
  const auto header = codec::decode_header(frame);
  frame.resize(codec::kFrameHeaderSize + header.payload_len);
  if (header.payload_len > 0 &&
      !read_exact(impl_->read_fd, frame.data() + codec::kFrameHeaderSize, header.payload_len)) {
    throw TransportError("stream closed mid-frame");
  }
  const SimTime t = impl_->now();
  const Direction d = impl_->send_dir == Direction::kUp ? Direction::kDown : Direction::kUp;
  impl_->record(d, frame.size(), t, t);
  return Received{std::move(frame), t, t};
}

void StreamEndpoint::close() {
  std::lock_guard lk(impl_->write_mu);
  if (impl_->closed) return;
  impl_->closed = true;
  if (::shutdown(impl_->write_fd, SHUT_WR) != 0 && impl_->write_fd != impl_->read_fd) {
    ::close(impl_->write_fd);
    impl_->write_fd = -1;
  }
}

TransferLedger StreamEndpoint::ledger() const {
  std::lock_guard lk(impl_->ledger_mu);
  return impl_->ledger;
}

SimTime StreamEndpoint::now() const { return impl_->now(); }

std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) {
    throw std::invalid_argument("address must be host:port, got '" + address + "'");
  }
  const std::string host = colon == 0 ? "127.0.0.1" : address.substr(0, colon);
  const unsigned long port = std::stoul(address.substr(colon + 1));
  if (port > 65535) throw std::invalid_argument("port out of range in '" + address + "'");
  return {host, static_cast<std::uint16_t>(port)};
}

std::unique_ptr<StreamEndpoint> connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + service);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::make_unique<StreamEndpoint>(fd, fd, Direction::kUp);
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("socket() failed");
  fd_ = fd;
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw TransportError("bad listen address " + host);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd_, 16) != 0) {
    ::close(fd_);
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " +
                         std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<StreamEndpoint> TcpListener::accept() {
  while (true) {
    const int listen_fd = fd_;
    if (listen_fd < 0) return nullptr;
    const int c = ::accept(listen_fd, nullptr, nullptr);
    if (c >= 0) {
      int one = 1;
      ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return std::make_unique<StreamEndpoint>(c, c, Direction::kDown);
    }
    if (errno == EINTR) continue;
    return nullptr;
  }
}

void TcpListener::close() {
  const int fd = fd_.exchange(-1);
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
}

}  // namespace cecollm::transport
