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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cecollm::codec {

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'C', 'E', 'C', 'O'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 18;
inline constexpr std::size_t kContextUploadFixedSize = 11;
inline constexpr std::size_t kOpenSessionFixedSize = 36;  // hash + prompt length
inline constexpr std::size_t kInferRequestSize = 4;
inline constexpr std::size_t kInferResponseSize = 12;
inline constexpr std::size_t kErrorFixedSize = 2;

enum class MessageType : std::uint8_t {
  kOpenSession = 1,
  kContextUpload = 2,
  kInferRequest = 3,
  kInferResponse = 4,
  kCloseSession = 5,
  kError = 6,
};

// Wire error codes. 1-5 are frame decoding failures, the rest are produced by
// the cloud server and carried back in Error messages.
enum class ErrorCode : std::uint16_t {
  kBadMagic = 1,
  kBadVersion = 2,
  kTruncated = 3,
  kLengthMismatch = 4,
  kUnknownType = 5,
  kMalformedPayload = 6,
  kModelMismatch = 10,
  kDuplicateSession = 11,
  kUnknownSession = 12,
  kWrongLayer = 13,
  kBadPosition = 14,
  kContextTimeout = 15,
  kSequenceOverflow = 16,
  kWrongMode = 17,
  kInternal = 18,
};

std::string_view to_string(ErrorCode code);

enum class WireEncoding : std::uint8_t { kF32 = 0, kF16 = 1 };

std::size_t bytes_per_element(WireEncoding encoding);

struct OpenSession {
  std::array<std::uint8_t, 32> model_hash{};
  std::vector<std::uint32_t> prompt;
  bool operator==(const OpenSession&) const = default;
};

struct ContextUpload {
  std::uint16_t layer = 0;
  std::uint32_t first_position = 0;
  std::uint32_t num_positions = 0;
  WireEncoding encoding = WireEncoding::kF16;
  // num_positions x hidden_dim elements, little-endian f32 or binary16.
  std::vector<std::uint8_t> activations;

  std::size_t element_count() const { return activations.size() / bytes_per_element(encoding); }
  bool operator==(const ContextUpload&) const = default;
};

struct InferRequest {
  std::uint32_t target_position = 0;
  bool operator==(const InferRequest&) const = default;
};

struct InferResponse {
  std::uint32_t token = 0;
  std::uint64_t cloud_compute_ns = 0;
  bool operator==(const InferResponse&) const = default;
};

struct CloseSession {
  bool operator==(const CloseSession&) const = default;
};

struct Error {
  ErrorCode code = ErrorCode::kInternal;
  std::string detail;
  bool operator==(const Error&) const = default;
};

using Message =
    std::variant<OpenSession, ContextUpload, InferRequest, InferResponse, CloseSession, Error>;

MessageType type_of(const Message& m);

struct Envelope {
  std::uint64_t session_id = 0;
  Message message;
  bool operator==(const Envelope&) const = default;
};

class DecodeError : public std::runtime_error {
 public:
  DecodeError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Frame: magic[4] "CECO" | version u8 | msg_type u8 | session_id u64 | payload_len u32 | payload.
std::vector<std::uint8_t> encode_message(std::uint64_t session_id, const Message& message);
std::vector<std::uint8_t> encode_message(const Envelope& envelope);

// Decodes exactly one frame occupying all of `frame`. Throws DecodeError.
Envelope decode_message(std::span<const std::uint8_t> frame);

struct FrameHeader {
  std::uint64_t session_id = 0;
  MessageType type = MessageType::kError;
  std::uint32_t payload_len = 0;
};

// Validates the first 18 bytes (magic, version, type). Used by stream readers
// to learn how many payload bytes follow.
FrameHeader decode_header(std::span<const std::uint8_t> header);

// Activation payload size for a ContextUpload. Throws std::invalid_argument
// for zero positions/width and std::overflow_error if it exceeds u32.
std::uint32_t payload_bytes(std::uint64_t num_positions, std::uint64_t hidden_dim,
                            WireEncoding encoding);

// Frame size for each message kind, for byte accounting without encoding.
std::size_t open_session_frame_bytes(std::size_t prompt_len);
std::size_t context_upload_frame_bytes(std::uint64_t num_positions, std::uint64_t hidden_dim,
                                       WireEncoding encoding);
inline constexpr std::size_t kInferRequestFrameBytes = kFrameHeaderSize + kInferRequestSize;
inline constexpr std::size_t kInferResponseFrameBytes = kFrameHeaderSize + kInferResponseSize;
inline constexpr std::size_t kCloseSessionFrameBytes = kFrameHeaderSize;

// Packs activations into a ContextUpload payload and back.
ContextUpload make_context_upload(std::uint16_t layer, std::uint32_t first_position,
                                  std::uint32_t hidden_dim, std::span<const float> activations,
                                  WireEncoding encoding);
// Throws DecodeError(kMalformedPayload) if the payload is not num_positions x hidden_dim.
std::vector<float> unpack_activations(const ContextUpload& upload, std::uint32_t hidden_dim);

}  // namespace cecollm::codec
