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

#include <stdexcept>

#include "cecollm/bench/bench.hpp"

namespace cecollm::bench {

namespace {

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("byte count overflows u64");
  return r;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("byte count overflows u64");
  return r;
}

constexpr std::uint64_t kUploadOverhead = codec::kFrameHeaderSize + codec::kContextUploadFixedSize;

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kNaive: return "naive";
    case Strategy::kCeCollm: return "ce-collm";
    case Strategy::kCloudOnly: return "cloud-only";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  for (Strategy x : {Strategy::kNaive, Strategy::kCeCollm, Strategy::kCloudOnly}) {
    if (s == to_string(x)) return x;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(s) + "'");
}

ByteCount analytic_bytes(std::uint64_t p, std::uint64_t t, std::uint64_t d, codec::WireEncoding precision,
                         Strategy strategy, std::optional<std::uint64_t> cloud_requests) {
  if (p == 0 || d == 0) throw std::invalid_argument("prompt length and hidden size must be positive");
  const std::uint64_t open_empty = codec::open_session_frame_bytes(0);
  ByteCount b;
  switch (strategy) {
    case Strategy::kNaive: {
      // Token i carries the p + i - 1 positions before it, always f32.
      for (std::uint64_t i = 1; i <= t; ++i) {
        const std::uint64_t payload = mul(mul(p + i - 1, d), 4);
        b.payload_up = add(b.payload_up, payload);
        b.framed_up = add(b.framed_up, open_empty + kUploadOverhead + payload +
                                           codec::kInferRequestFrameBytes + codec::kCloseSessionFrameBytes);
        b.framed_down = add(b.framed_down, codec::kInferResponseFrameBytes);
      }
      break;
    }
    case Strategy::kCeCollm: {
      const std::uint64_t r = cloud_requests.value_or(t);
      if (r > t) throw std::invalid_argument("more cloud requests than generated tokens");
      const std::uint64_t row = mul(d, codec::bytes_per_element(precision));
      b.payload_up = mul(add(p, t), row);
      b.framed_up = add(open_empty + kUploadOverhead + codec::kCloseSessionFrameBytes, b.payload_up);
      b.framed_up = add(b.framed_up, mul(t, kUploadOverhead));
      b.framed_up = add(b.framed_up, mul(r, codec::kInferRequestFrameBytes));
      b.framed_down = mul(r, codec::kInferResponseFrameBytes);
      break;
    }
    case Strategy::kCloudOnly: {
      if (t == 0) break;
      b.framed_up = add(codec::open_session_frame_bytes(p), codec::kInferRequestFrameBytes +
                                                                 codec::kCloseSessionFrameBytes);
      b.framed_down = mul(t, codec::kInferResponseFrameBytes);
      break;
    }
  }
  return b;
}

}  // namespace cecollm::bench
