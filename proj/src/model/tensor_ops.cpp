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

#include "cecollm/model/tensor_ops.hpp"

#include <cassert>
#include <cmath>

namespace cecollm::model {

float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) acc[j] += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

void matvec(std::span<const float> w, std::size_t rows, std::size_t cols, std::span<const float> x,
            std::span<float> out) {
  assert(w.size() == rows * cols && x.size() == cols && out.size() == rows);
  const float* wp = w.data();
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(wp + r * cols, x.data(), cols);
}

void rms_norm(std::span<const float> x, std::span<const float> gain, std::span<float> out) {
  assert(x.size() == gain.size() && x.size() == out.size());
  float ss = dot(x.data(), x.data(), x.size());
  float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + kRmsEps);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

}  // namespace cecollm::model
