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

#include <cstdint>
#include <span>
#include <vector>

namespace cecollm::codec {

inline constexpr std::uint16_t kHalfQuietNan = 0x7E00;
inline constexpr std::uint16_t kHalfPosInf = 0x7C00;

// binary32 -> binary16, round-to-nearest-even. Overflow saturates to +/-inf,
// subnormals are produced rather than flushed, any NaN becomes 0x7E00.
std::uint16_t encode_f16(float x);
// Exact for every binary16 pattern.
float decode_f16(std::uint16_t h);

void encode_f16(std::span<const float> in, std::span<std::uint16_t> out);
void decode_f16(std::span<const std::uint16_t> in, std::span<float> out);

}  // namespace cecollm::codec
