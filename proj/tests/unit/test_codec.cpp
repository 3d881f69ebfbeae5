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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "cecollm/codec/half.hpp"
#include "cecollm/codec/message.hpp"
#include "oracles.hpp"

namespace cecollm::codec {
namespace {

using testing::brute_force_half;
using testing::half_value;
using testing::random_message;

TEST(Half, EveryFinitePatternRoundTrips) {
  int checked = 0;
  for (std::uint32_t h = 0; h <= 0xFFFF; ++h) {
    const auto bits = static_cast<std::uint16_t>(h);
    if ((bits & 0x7C00) == 0x7C00) continue;
    const float f = decode_f16(bits);
    ASSERT_EQ(static_cast<double>(f), half_value(bits)) << std::hex << h;
    ASSERT_EQ(encode_f16(f), bits) << std::hex << h;
    ++checked;
  }
  EXPECT_EQ(checked, 63488);
}

TEST(Half, SpecialValues) {
  EXPECT_EQ(encode_f16(std::numeric_limits<float>::infinity()), 0x7C00);
  EXPECT_EQ(encode_f16(-std::numeric_limits<float>::infinity()), 0xFC00);
  EXPECT_EQ(encode_f16(std::numeric_limits<float>::quiet_NaN()), kHalfQuietNan);
  EXPECT_EQ(encode_f16(-std::numeric_limits<float>::quiet_NaN()), kHalfQuietNan);
  EXPECT_TRUE(std::isnan(decode_f16(0x7E00)));
  EXPECT_TRUE(std::isnan(decode_f16(0x7C01)));
  EXPECT_EQ(decode_f16(0x7C00), std::numeric_limits<float>::infinity());
  EXPECT_EQ(encode_f16(0.0f), 0x0000);
  EXPECT_EQ(encode_f16(-0.0f), 0x8000);
  EXPECT_EQ(encode_f16(1.0f), 0x3C00);
  EXPECT_EQ(encode_f16(65504.0f), 0x7BFF);
  EXPECT_EQ(encode_f16(65519.0f), 0x7BFF);
  EXPECT_EQ(encode_f16(65520.0f), 0x7C00);
  EXPECT_EQ(encode_f16(1e10f), 0x7C00);
  EXPECT_EQ(encode_f16(70000.0f), 0x7C00);
  EXPECT_EQ(encode_f16(0.1f), 0x2E66);
  EXPECT_EQ(encode_f16(std::ldexp(1.0f, -24)), 0x0001);  // smallest subnormal
  EXPECT_EQ(encode_f16(std::ldexp(1.0f, -25)), 0x0000);  // tie to even zero
  EXPECT_EQ(encode_f16(std::ldexp(1.5f, -25)), 0x0001);
  EXPECT_EQ(encode_f16(std::ldexp(3.0f, -25)), 0x0002);  // 1.5 ulp ties up to even
  // 1 + 2^-11 sits halfway between 1 and 1 + 2^-10.
  EXPECT_EQ(encode_f16(1.0f + std::ldexp(1.0f, -11)), 0x3C00);
  EXPECT_EQ(encode_f16(1.0f + 3 * std::ldexp(1.0f, -11)), 0x3C02);
}

TEST(Half, MatchesBruteForceNearestEven) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> exp(-30, 17);
  std::uniform_real_distribution<float> mant(1.0f, 2.0f);
  for (int i = 0; i < 10000; ++i) {
    float x = std::ldexp(mant(rng), exp(rng));
    if (rng() & 1) x = -x;
    ASSERT_EQ(encode_f16(x), brute_force_half(x)) << x;
  }
  // Exact midpoints between neighbouring halves.
  for (std::uint16_t h = 0; h < 0x7BFF; h += 37) {
    const float mid = static_cast<float>((half_value(h) + half_value(h + 1)) / 2);
    ASSERT_EQ(encode_f16(mid), brute_force_half(mid)) << h;
    ASSERT_EQ(encode_f16(mid) & 1, 0) << h;
  }
}

TEST(Half, SpanOverloads) {
  std::vector<float> in{0.5f, -2.25f, 1000.0f};
  std::vector<std::uint16_t> h(3);
  std::vector<float> back(3);
  encode_f16(in, h);
  decode_f16(h, back);
  EXPECT_EQ(back, in);
}

TEST(Message, RandomRoundTrip) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 10000; ++i) {
    Envelope e{rng(), random_message(rng)};
    const auto frame = encode_message(e);
    ASSERT_EQ(frame.size() - kFrameHeaderSize,
              static_cast<std::size_t>(frame[14] | frame[15] << 8 | frame[16] << 16 | frame[17] << 24));
    ASSERT_EQ(decode_message(frame), e) << i;
  }
}

TEST(Message, FrameSizesMatchHelpers) {
  EXPECT_EQ(encode_message(1, OpenSession{}).size(), 54u);
  EXPECT_EQ(open_session_frame_bytes(0), 54u);
  OpenSession o;
  o.prompt = {1, 2, 3};
  EXPECT_EQ(encode_message(1, o).size(), open_session_frame_bytes(3));
  EXPECT_EQ(encode_message(1, InferRequest{5}).size(), kInferRequestFrameBytes);
  EXPECT_EQ(kInferRequestFrameBytes, 22u);
  EXPECT_EQ(encode_message(1, InferResponse{5, 6}).size(), kInferResponseFrameBytes);
  EXPECT_EQ(kInferResponseFrameBytes, 30u);
  EXPECT_EQ(encode_message(1, CloseSession{}).size(), kCloseSessionFrameBytes);
  EXPECT_EQ(kCloseSessionFrameBytes, 18u);
  std::vector<float> act(3 * 8, 0.25f);
  for (auto enc : {WireEncoding::kF16, WireEncoding::kF32}) {
    auto up = make_context_upload(2, 10, 8, act, enc);
    EXPECT_EQ(encode_message(1, up).size(), context_upload_frame_bytes(3, 8, enc));
    EXPECT_EQ(context_upload_frame_bytes(3, 8, enc), 29 + 3 * 8 * bytes_per_element(enc));
  }
}

TEST(Message, ExactBytes) {
  const auto req = encode_message(0x0102030405060708ull, InferRequest{0x2A});
  const std::vector<std::uint8_t> want{'C', 'E', 'C', 'O', 0x01, 0x03, 0x08, 0x07, 0x06, 0x05, 0x04,
                                       0x03, 0x02, 0x01, 0x04, 0x00, 0x00, 0x00, 0x2A, 0x00, 0x00, 0x00};
  EXPECT_EQ(req, want);

  std::vector<float> act{1.0f, -2.0f};
  const auto up = encode_message(9, make_context_upload(4, 7, 2, act, WireEncoding::kF16));
  const std::vector<std::uint8_t> want_up{'C',  'E',  'C',  'O',  0x01, 0x02, 0x09, 0x00, 0x00, 0x00,
                                          0x00, 0x00, 0x00, 0x00, 0x0F, 0x00, 0x00, 0x00,  // header
                                          0x04, 0x00,                                      // layer
                                          0x07, 0x00, 0x00, 0x00,                          // first_position
                                          0x01, 0x00, 0x00, 0x00,                          // num_positions
                                          0x01,                                            // f16
                                          0x00, 0x3C, 0x00, 0xC0};
  EXPECT_EQ(up, want_up);

  const auto close = encode_message(42, CloseSession{});
  const std::vector<std::uint8_t> want_close{'C', 'E', 'C', 'O', 0x01, 0x05, 0x2A, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(close, want_close);

  const auto resp = encode_message(1, InferResponse{0x101, 1000});
  const std::vector<std::uint8_t> want_resp{'C', 'E', 'C', 'O', 0x01, 0x04, 0x01, 0, 0, 0, 0, 0, 0, 0, 0x0C, 0, 0, 0,
                                            0x01, 0x01, 0, 0, 0xE8, 0x03, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(resp, want_resp);

  const auto err = encode_message(2, Error{ErrorCode::kUnknownSession, "x"});
  const std::vector<std::uint8_t> want_err{'C', 'E', 'C', 'O', 0x01, 0x06, 0x02, 0, 0, 0, 0, 0, 0, 0, 0x03, 0, 0, 0,
                                           0x0C, 0x00, 'x'};
  EXPECT_EQ(err, want_err);
}

ErrorCode decode_code(std::span<const std::uint8_t> frame) {
  try {
    decode_message(frame);
  } catch (const DecodeError& e) {
    return e.code();
  }
  ADD_FAILURE() << "frame decoded";
  return ErrorCode::kInternal;
}

TEST(Message, FramingErrors) {
  const auto good = encode_message(3, InferRequest{4});
  auto f = good;
  f[0] = 'X';
  EXPECT_EQ(decode_code(f), ErrorCode::kBadMagic);
  f = good;
  f[4] = 2;
  EXPECT_EQ(decode_code(f), ErrorCode::kBadVersion);
  f = good;
  f[5] = 0;
  EXPECT_EQ(decode_code(f), ErrorCode::kUnknownType);
  f[5] = 7;
  EXPECT_EQ(decode_code(f), ErrorCode::kUnknownType);
  EXPECT_EQ(decode_code(std::span(good).first(10)), ErrorCode::kTruncated);
  EXPECT_EQ(decode_code(std::span(good).first(20)), ErrorCode::kTruncated);
  f = good;
  f.push_back(0);
  EXPECT_EQ(decode_code(f), ErrorCode::kLengthMismatch);
}

TEST(Message, MalformedPayloads) {
  auto frame_of = [](MessageType t, std::vector<std::uint8_t> payload) {
    std::vector<std::uint8_t> f{'C', 'E', 'C', 'O', 1, static_cast<std::uint8_t>(t), 0, 0, 0, 0, 0, 0, 0, 0};
    const auto n = static_cast<std::uint32_t>(payload.size());
    for (int i = 0; i < 4; ++i) f.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
  };
  // Prompt count says 2 but only one id follows.
  std::vector<std::uint8_t> open(32, 0);
  for (std::uint8_t b : {2, 0, 0, 0, 1, 0, 0, 0}) open.push_back(b);
  EXPECT_EQ(decode_code(frame_of(MessageType::kOpenSession, open)), ErrorCode::kMalformedPayload);
  // Encoding byte 2.
  EXPECT_EQ(decode_code(frame_of(MessageType::kContextUpload, {0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0})),
            ErrorCode::kMalformedPayload);
  // Zero positions.
  EXPECT_EQ(decode_code(frame_of(MessageType::kContextUpload, {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0})),
            ErrorCode::kMalformedPayload);
  // Two f16 positions with 3 bytes of activations.
  EXPECT_EQ(decode_code(frame_of(MessageType::kContextUpload, {0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0})),
            ErrorCode::kMalformedPayload);
  EXPECT_EQ(decode_code(frame_of(MessageType::kInferRequest, {1, 2})), ErrorCode::kMalformedPayload);
  EXPECT_EQ(decode_code(frame_of(MessageType::kInferRequest, {1, 2, 3, 4, 5})), ErrorCode::kMalformedPayload);
  EXPECT_EQ(decode_code(frame_of(MessageType::kInferResponse, {1, 2, 3, 4})), ErrorCode::kMalformedPayload);
  EXPECT_EQ(decode_code(frame_of(MessageType::kCloseSession, {0})), ErrorCode::kMalformedPayload);
  EXPECT_EQ(decode_code(frame_of(MessageType::kError, {1})), ErrorCode::kMalformedPayload);
}

TEST(Message, ActivationPacking) {
  std::vector<float> act{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  auto f32 = make_context_upload(1, 0, 3, act, WireEncoding::kF32);
  EXPECT_EQ(f32.num_positions, 2u);
  EXPECT_EQ(unpack_activations(f32, 3), act);
  auto f16 = make_context_upload(1, 0, 3, act, WireEncoding::kF16);
  auto back = unpack_activations(f16, 3);
  for (std::size_t i = 0; i < act.size(); ++i) EXPECT_EQ(back[i], decode_f16(encode_f16(act[i])));
  EXPECT_THROW(unpack_activations(f16, 2), DecodeError);
  EXPECT_THROW(make_context_upload(1, 0, 4, act, WireEncoding::kF16), std::invalid_argument);
  EXPECT_THROW(make_context_upload(1, 0, 0, act, WireEncoding::kF16), std::invalid_argument);
}

TEST(Message, PayloadBytes) {
  EXPECT_EQ(payload_bytes(100, 4096, WireEncoding::kF16), 819200u);
  EXPECT_EQ(payload_bytes(100, 4096, WireEncoding::kF32), 1638400u);
  EXPECT_THROW(payload_bytes(0, 8, WireEncoding::kF16), std::invalid_argument);
  EXPECT_THROW(payload_bytes(8, 0, WireEncoding::kF16), std::invalid_argument);
  EXPECT_EQ(payload_bytes(1, 0x7FFFFFFF, WireEncoding::kF16), 0xFFFFFFFEu);
  EXPECT_THROW(payload_bytes(1, 0x80000000ull, WireEncoding::kF16), std::overflow_error);
  EXPECT_THROW(payload_bytes(1ull << 40, 1ull << 40, WireEncoding::kF32), std::overflow_error);
}

TEST(Message, ErrorCodeNames) {
  EXPECT_EQ(to_string(ErrorCode::kContextTimeout), "CONTEXT_TIMEOUT");
  EXPECT_EQ(to_string(ErrorCode::kBadMagic), "BAD_MAGIC");
  EXPECT_EQ(to_string(static_cast<ErrorCode>(99)), "UNKNOWN");
}

}  // namespace
}  // namespace cecollm::codec
