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

#include "cecollm/codec/message.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "cecollm/codec/half.hpp"

namespace cecollm::codec {

namespace {

static_assert(std::endian::native == std::endian::little, "wire codec assumes a little-endian host");

class Out {
 public:
  explicit Out(std::vector<std::uint8_t>& buf) : buf_(buf) {}
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

 private:
  std::vector<std::uint8_t>& buf_;
};

class In {
 public:
  explicit In(std::span<const std::uint8_t> b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> rest() {
    auto r = b_.subspan(pos_);
    pos_ = b_.size();
    return r;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DecodeError(ErrorCode::kMalformedPayload, "payload too short");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

[[noreturn]] void malformed(const std::string& what) {
  throw DecodeError(ErrorCode::kMalformedPayload, what);
}

void encode_payload(Out& o, const OpenSession& m) {
  o.bytes(m.model_hash);
  o.put(static_cast<std::uint32_t>(m.prompt.size()));
  for (auto t : m.prompt) o.put(t);
}

void encode_payload(Out& o, const ContextUpload& m) {
  o.put(m.layer);
  o.put(m.first_position);
  o.put(m.num_positions);
  o.put(static_cast<std::uint8_t>(m.encoding));
  o.bytes(m.activations);
}

void encode_payload(Out& o, const InferRequest& m) { o.put(m.target_position); }

void encode_payload(Out& o, const InferResponse& m) {
  o.put(m.token);
  o.put(m.cloud_compute_ns);
}

void encode_payload(Out&, const CloseSession&) {}

void encode_payload(Out& o, const Error& m) {
  o.put(static_cast<std::uint16_t>(m.code));
  o.bytes({reinterpret_cast<const std::uint8_t*>(m.detail.data()), m.detail.size()});
}

Message decode_payload(MessageType type, std::span<const std::uint8_t> payload) {
  In in(payload);
  switch (type) {
    case MessageType::kOpenSession: {
      OpenSession m;
      for (auto& b : m.model_hash) b = in.get<std::uint8_t>();
      const auto n = in.get<std::uint32_t>();
      if (in.remaining() != static_cast<std::uint64_t>(n) * 4) malformed("OpenSession prompt length disagrees with payload");
      m.prompt.resize(n);
      for (auto& t : m.prompt) t = in.get<std::uint32_t>();
      return m;
    }
    case MessageType::kContextUpload: {
      ContextUpload m;
      m.layer = in.get<std::uint16_t>();
      m.first_position = in.get<std::uint32_t>();
      m.num_positions = in.get<std::uint32_t>();
      const auto enc = in.get<std::uint8_t>();
      if (enc > 1) malformed("unknown activation encoding");
      m.encoding = static_cast<WireEncoding>(enc);
      auto rest = in.rest();
      const std::size_t elem = bytes_per_element(m.encoding);
      if (m.num_positions == 0) malformed("ContextUpload with zero positions");
      if (rest.empty() || rest.size() % (elem * m.num_positions) != 0) {
        malformed("activation payload is not num_positions x hidden_dim");
      }
      m.activations.assign(rest.begin(), rest.end());
      return m;
    }
    case MessageType::kInferRequest: {
      InferRequest m;
      m.target_position = in.get<std::uint32_t>();
      if (in.remaining() != 0) malformed("InferRequest payload too long");
      return m;
    }
    case MessageType::kInferResponse: {
      InferResponse m;
      m.token = in.get<std::uint32_t>();
      m.cloud_compute_ns = in.get<std::uint64_t>();
      if (in.remaining() != 0) malformed("InferResponse payload too long");
      return m;
    }
    case MessageType::kCloseSession:
      if (in.remaining() != 0) malformed("CloseSession carries no payload");
      return CloseSession{};
    case MessageType::kError: {
      Error m;
      m.code = static_cast<ErrorCode>(in.get<std::uint16_t>());
      auto rest = in.rest();
      m.detail.assign(reinterpret_cast<const char*>(rest.data()), rest.size());
      return m;
    }
  }
  throw DecodeError(ErrorCode::kUnknownType, "unknown message type");
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadMagic: return "BAD_MAGIC";
    case ErrorCode::kBadVersion: return "BAD_VERSION";
    case ErrorCode::kTruncated: return "TRUNCATED";
    case ErrorCode::kLengthMismatch: return "LENGTH_MISMATCH";
    case ErrorCode::kUnknownType: return "UNKNOWN_TYPE";
    case ErrorCode::kMalformedPayload: return "MALFORMED_PAYLOAD";
    case ErrorCode::kModelMismatch: return "MODEL_MISMATCH";
    case ErrorCode::kDuplicateSession: return "DUPLICATE_SESSION";
    case ErrorCode::kUnknownSession: return "UNKNOWN_SESSION";
    case ErrorCode::kWrongLayer: return "WRONG_LAYER";
    case ErrorCode::kBadPosition: return "BAD_POSITION";
    case ErrorCode::kContextTimeout: return "CONTEXT_TIMEOUT";
    case ErrorCode::kSequenceOverflow: return "SEQUENCE_OVERFLOW";
    case ErrorCode::kWrongMode: return "WRONG_MODE";
    case ErrorCode::kInternal: return "INTERNAL";
  }
  return "UNKNOWN";
}

std::size_t bytes_per_element(WireEncoding encoding) {
  return encoding == WireEncoding::kF16 ? 2 : 4;
}

MessageType type_of(const Message& m) {
  return static_cast<MessageType>(m.index() + 1);
}

std::vector<std::uint8_t> encode_message(std::uint64_t session_id, const Message& message) {
  std::vector<std::uint8_t> frame;
  Out o(frame);
  o.bytes(kFrameMagic);
  o.put(kProtocolVersion);
  o.put(static_cast<std::uint8_t>(type_of(message)));
  o.put(session_id);
  o.put(std::uint32_t{0});  // patched below
  std::visit([&](const auto& m) { encode_payload(o, m); }, message);
  const std::size_t payload = frame.size() - kFrameHeaderSize;
  if (payload > std::numeric_limits<std::uint32_t>::max()) {
    throw std::overflow_error("message payload exceeds u32 length field");
  }
  const auto len = static_cast<std::uint32_t>(payload);
  std::memcpy(frame.data() + 14, &len, sizeof(len));
  return frame;
}

std::vector<std::uint8_t> encode_message(const Envelope& envelope) {
  return encode_message(envelope.session_id, envelope.message);
}

FrameHeader decode_header(std::span<const std::uint8_t> header) {
  if (header.size() < kFrameHeaderSize) throw DecodeError(ErrorCode::kTruncated, "frame shorter than header");
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), header.begin())) {
    throw DecodeError(ErrorCode::kBadMagic, "bad frame magic");
  }
  if (header[4] != kProtocolVersion) {
    throw DecodeError(ErrorCode::kBadVersion, "unsupported protocol version " + std::to_string(header[4]));
  }
  const std::uint8_t type = header[5];
  if (type < 1 || type > 6) {
    throw DecodeError(ErrorCode::kUnknownType, "unknown message type " + std::to_string(type));
  }
  FrameHeader h;
  h.type = static_cast<MessageType>(type);
  std::memcpy(&h.session_id, header.data() + 6, sizeof(h.session_id));
  std::memcpy(&h.payload_len, header.data() + 14, sizeof(h.payload_len));
  return h;
}

Envelope decode_message(std::span<const std::uint8_t> frame) {
  const FrameHeader h = decode_header(frame);
  const std::size_t have = frame.size() - kFrameHeaderSize;
  if (have < h.payload_len) {
    throw DecodeError(ErrorCode::kTruncated, "payload_len " + std::to_string(h.payload_len) +
                                                 " exceeds " + std::to_string(have) + " bytes present");
  }
  if (have > h.payload_len) {
    throw DecodeError(ErrorCode::kLengthMismatch, "frame carries " + std::to_string(have - h.payload_len) +
                                                      " bytes beyond payload_len");
  }
  return {h.session_id, decode_payload(h.type, frame.subspan(kFrameHeaderSize))};
}

std::uint32_t payload_bytes(std::uint64_t num_positions, std::uint64_t hidden_dim,
                            WireEncoding encoding) {
  if (num_positions == 0) throw std::invalid_argument("num_positions must be at least 1");
  if (hidden_dim == 0) throw std::invalid_argument("hidden_dim must be at least 1");
  const std::uint64_t elem = bytes_per_element(encoding);
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint32_t>::max();
  if (num_positions > kMax / hidden_dim || num_positions * hidden_dim > kMax / elem) {
    throw std::overflow_error("activation payload size overflows u32");
  }
  return static_cast<std::uint32_t>(num_positions * hidden_dim * elem);
}

std::size_t open_session_frame_bytes(std::size_t prompt_len) {
  return kFrameHeaderSize + kOpenSessionFixedSize + 4 * prompt_len;
}

std::size_t context_upload_frame_bytes(std::uint64_t num_positions, std::uint64_t hidden_dim,
                                       WireEncoding encoding) {
  return kFrameHeaderSize + kContextUploadFixedSize + payload_bytes(num_positions, hidden_dim, encoding);
}

ContextUpload make_context_upload(std::uint16_t layer, std::uint32_t first_position,
                                  std::uint32_t hidden_dim, std::span<const float> activations,
                                  WireEncoding encoding) {
  if (hidden_dim == 0 || activations.empty() || activations.size() % hidden_dim != 0) {
    throw std::invalid_argument("activations must be a whole number of rows");
  }
  ContextUpload m;
  m.layer = layer;
  m.first_position = first_position;
  m.num_positions = static_cast<std::uint32_t>(activations.size() / hidden_dim);
  m.encoding = encoding;
  m.activations.resize(payload_bytes(m.num_positions, hidden_dim, encoding));
  if (encoding == WireEncoding::kF32) {
    std::memcpy(m.activations.data(), activations.data(), m.activations.size());
  } else {
    for (std::size_t i = 0; i < activations.size(); ++i) {
      const std::uint16_t h = encode_f16(activations[i]);
      std::memcpy(m.activations.data() + 2 * i, &h, 2);
    }
  }
  return m;
}

std::vector<float> unpack_activations(const ContextUpload& upload, std::uint32_t hidden_dim) {
  const std::size_t elem = bytes_per_element(upload.encoding);
  if (upload.num_positions == 0 ||
      upload.activations.size() != static_cast<std::size_t>(upload.num_positions) * hidden_dim * elem) {
    malformed("activation payload does not match num_positions x hidden_dim");
  }
  std::vector<float> out(static_cast<std::size_t>(upload.num_positions) * hidden_dim);
  if (upload.encoding == WireEncoding::kF32) {
    std::memcpy(out.data(), upload.activations.data(), upload.activations.size());
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint16_t h;
      std::memcpy(&h, upload.activations.data() + 2 * i, 2);
      out[i] = decode_f16(h);
    }
  }
  return out;
}

}  // namespace cecollm::codec
