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

#include <cstddef>
#include <span>

namespace cecollm::model {

// Fixed-order dot product (eight interleaved partial sums). Every matvec in the
// model goes through here, so a position's activations do not depend on how
// many positions were batched together.
float dot(const float* a, const float* b, std::size_t n);

// out[r] = W[r, :] . x for a row-major rows x cols matrix.
void matvec(std::span<const float> w, std::size_t rows, std::size_t cols, std::span<const float> x,
            std::span<float> out);

void rms_norm(std::span<const float> x, std::span<const float> gain, std::span<float> out);

inline constexpr float kRmsEps = 1e-5f;

}  // namespace cecollm::model
