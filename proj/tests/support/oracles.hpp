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

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "cecollm/codec/half.hpp"
#include "cecollm/codec/message.hpp"

namespace cecollm::testing {

using namespace codec;

// Value of a binary16 pattern computed from the field definitions in double.
inline double half_value(std::uint16_t h) {
  const int sign = h >> 15, exp = (h >> 10) & 0x1F, man = h & 0x3FF;
  double v = exp == 0 ? std::ldexp(man, -24) : std::ldexp(1024 + man, exp - 25);
  return sign ? -v : v;
}

// Nearest finite half by exhaustive search; ties go to the even pattern.
inline std::uint16_t brute_force_half(float x) {
  if (std::isnan(x)) return kHalfQuietNan;
  const double d = x;
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::fabs(d);
  // Halfway between 65504 and the next step (65536) rounds to even, i.e. up.
  if (a >= 65520.0) return sign | kHalfPosInf;
  std::uint16_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::uint16_t h = 0; h < 0x7C00; ++h) {
    const double err = std::fabs(half_value(h) - a);
    if (err < best_err || (err == best_err && (h & 1) == 0)) {
      best = h;
      best_err = err;
    }
  }
  return sign | best;
}

inline Message random_message(std::mt19937_64& rng) {
  auto u32 = [&] { return static_cast<std::uint32_t>(rng()); };
  switch (rng() % 6) {
    case 0: {
      OpenSession m;
      for (auto& b : m.model_hash) b = static_cast<std::uint8_t>(rng());
      m.prompt.resize(rng() % 40);
      for (auto& t : m.prompt) t = u32() % 260;
      return m;
    }
    case 1: {
      ContextUpload m;
      m.layer = static_cast<std::uint16_t>(rng());
      m.first_position = u32();
      m.num_positions = 1 + rng() % 5;
      m.encoding = (rng() & 1) ? WireEncoding::kF16 : WireEncoding::kF32;
      const std::size_t width = 1 + rng() % 9;
      m.activations.resize(m.num_positions * width * bytes_per_element(m.encoding));
      for (auto& b : m.activations) b = static_cast<std::uint8_t>(rng());
      return m;
    }
    case 2: return InferRequest{u32()};
    case 3: return InferResponse{u32(), rng()};
    case 4: return CloseSession{};
    default: {
      Error m;
      m.code = static_cast<ErrorCode>(10 + rng() % 9);
      m.detail.resize(rng() % 30);
      for (auto& c : m.detail) c = static_cast<char>(rng());
      return m;
    }
  }
}

}  // namespace cecollm::testing
