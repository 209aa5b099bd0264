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

// Ring tensors on the wire: ring_bits/8 bytes per element, little-endian,
// row-major, no shape header (both ends know the shape from the protocol).

#include <span>

#include "splitfss/common/bytes.hpp"
#include "splitfss/ring/tensor.hpp"

namespace splitfss::net {

inline std::size_t elem_bytes(const ring::FixedPointConfig& cfg) {
  return static_cast<std::size_t>(cfg.ring_bits / 8);
}

inline void write_elems(ByteWriter& w, std::span<const ring::Elem> v,
                        const ring::FixedPointConfig& cfg) {
  const int width = cfg.ring_bits / 8;
  if (width == 8) {
    w.raw(v.data(), v.size() * 8);  // little-endian host
    return;
  }
  for (auto e : v) w.le(e, width);
}

inline Bytes encode_elems(std::span<const ring::Elem> v, const ring::FixedPointConfig& cfg) {
  ByteWriter w(v.size() * elem_bytes(cfg));
  write_elems(w, v, cfg);
  return w.take();
}

inline void read_elems(ByteReader& r, std::span<ring::Elem> out,
                       const ring::FixedPointConfig& cfg) {
  const int width = cfg.ring_bits / 8;
  if (width == 8) {
    auto raw = r.raw(out.size() * 8);
    std::memcpy(out.data(), raw.data(), raw.size());
    return;
  }
  for (auto& e : out) e = r.le(width);
}

/// Decodes exactly shape_size(shape) elements; any other payload length is a
/// protocol error.
inline ring::RingTensor decode_tensor(std::span<const std::uint8_t> payload, ring::Shape shape,
                                      const ring::FixedPointConfig& cfg) {
  const std::size_t n = ring::shape_size(shape);
  if (payload.size() != n * elem_bytes(cfg)) {
    throw ProtocolError("tensor payload of " + std::to_string(payload.size()) +
                        " bytes, expected " + std::to_string(n * elem_bytes(cfg)) + " for shape " +
                        ring::shape_str(shape));
  }
  ring::RingTensor t(std::move(shape));
  ByteReader r(payload, "tensor");
  read_elems(r, t.span(), cfg);
  return t;
}

inline Bytes encode_tensor(const ring::RingTensor& t, const ring::FixedPointConfig& cfg) {
  return encode_elems(t.span(), cfg);
}

}  // namespace splitfss::net
