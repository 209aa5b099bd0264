// Copyright 2026 The SplitFSS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Wire frame: 22-byte header followed by the payload.
//
//   offset  size  field
//   0       4     magic "SFSS"
//   4       1     version
//   5       1     message type
//   6       8     session id, little-endian
//   14      8     payload length, little-endian
//
// See docs/wire.md for worked examples.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>

#include "splitfss/common/bytes.hpp"

namespace splitfss::net {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'F', 'S', 'S'};
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 22;
inline constexpr std::uint64_t kMaxPayload = std::uint64_t{1} << 30;

enum class MsgType : std::uint8_t {
  kSync = 1,
  kXPub = 2,
  kLabelShare = 3,
  kGradShare = 4,
  kLossShare = 5,
  kKeyBlob = 6,
  kTripleBlob = 7,
  kMetric = 8,
  kClose = 9,
  kOpen = 10,  // server-to-server opening of masked values
};

inline bool valid_msg_type(std::uint8_t t) { return t >= 1 && t <= 10; }

inline const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kSync: return "SYNC";
    case MsgType::kXPub: return "X_PUB";
    case MsgType::kLabelShare: return "LABEL_SHARE";
    case MsgType::kGradShare: return "GRAD_SHARE";
    case MsgType::kLossShare: return "LOSS_SHARE";
    case MsgType::kKeyBlob: return "KEY_BLOB";
    case MsgType::kTripleBlob: return "TRIPLE_BLOB";
    case MsgType::kMetric: return "METRIC";
    case MsgType::kClose: return "CLOSE";
    case MsgType::kOpen: return "OPEN";
  }
  return "?";
}

struct FrameHeader {
  std::uint8_t version = kWireVersion;
  MsgType type = MsgType::kSync;
  std::uint64_t session_id = 0;
  std::uint64_t payload_len = 0;
};

class VersionError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

inline std::array<std::uint8_t, kHeaderSize> encode_header(const FrameHeader& h) {
  std::array<std::uint8_t, kHeaderSize> out{};
  std::copy(kMagic.begin(), kMagic.end(), out.begin());
  out[4] = h.version;
  out[5] = static_cast<std::uint8_t>(h.type);
  for (int i = 0; i < 8; ++i) {
    out[6 + i] = static_cast<std::uint8_t>(h.session_id >> (8 * i));
    out[14 + i] = static_cast<std::uint8_t>(h.payload_len >> (8 * i));
  }
  return out;
}

/// Parses and validates a header; throws FormatError on bad magic, unknown
/// type or oversize payload, VersionError on a version mismatch.
inline FrameHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw FormatError("frame: short header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("frame: bad magic");
  }
  FrameHeader h;
  h.version = bytes[4];
  if (h.version != kWireVersion) {
    throw VersionError("frame: wire version " + std::to_string(h.version) + ", expected " +
                       std::to_string(kWireVersion));
  }
  if (!valid_msg_type(bytes[5])) {
    throw FormatError("frame: unknown message type " + std::to_string(bytes[5]));
  }
  h.type = static_cast<MsgType>(bytes[5]);
  ByteReader r(bytes.subspan(6, 16), "frame header");
  h.session_id = r.u64();
  h.payload_len = r.u64();
  if (h.payload_len > kMaxPayload) {
    throw FormatError("frame: payload of " + std::to_string(h.payload_len) +
                      " bytes exceeds the 1 GiB limit");
  }
  return h;
}

inline Bytes encode_frame(MsgType type, std::uint64_t session_id,
                          std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw FormatError("frame: payload exceeds 1 GiB");
  const auto h = encode_header({kWireVersion, type, session_id, payload.size()});
  Bytes out;
  out.reserve(kHeaderSize + payload.size());
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace splitfss::net
