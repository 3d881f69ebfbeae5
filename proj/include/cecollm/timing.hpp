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

#include <chrono>

#include "cecollm/transport/transport.hpp"

namespace cecollm {

using transport::SimTime;

// Cost of one pass of one layer over one position, and of one head evaluation.
struct ComputeCost {
  SimTime per_layer_position{0};
  SimTime per_head{0};

  SimTime of(std::uint64_t layer_positions, std::uint64_t heads) const {
    return per_layer_position * static_cast<std::int64_t>(layer_positions) +
           per_head * static_cast<std::int64_t>(heads);
  }
};

// Modeled timing charges fixed per-operation costs so simulated runs are
// deterministic; measured timing charges the wall-clock time of the real
// computation instead.
struct ComputeTiming {
  bool measured = false;
  ComputeCost edge{std::chrono::microseconds(500), std::chrono::microseconds(250)};
  ComputeCost cloud{std::chrono::microseconds(50), std::chrono::microseconds(25)};
};

// Runs `fn` and returns either the modeled cost or the elapsed wall time.
template <typename Fn>
SimTime charge(bool measured, SimTime modeled, Fn&& fn) {
  if (!measured) {
    fn();
    return modeled;
  }
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration_cast<SimTime>(std::chrono::steady_clock::now() - t0);
}

}  // namespace cecollm
