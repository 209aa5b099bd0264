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

#include <cmath>
#include <cstdint>
#include <string>

#include "splitfss/common/error.hpp"

namespace splitfss::ring {

using Elem = std::uint64_t;

/// Fixed-point encoding over Z_{2^ring_bits}. Elements are stored in the low
/// ring_bits of a uint64_t; the high bits are always zero.
///
/// ring_bits = 16 exists only as a small test ring that can be scanned
/// exhaustively; protocol sessions use 32 or 64.
struct FixedPointConfig {
  int ring_bits = 64;
  int frac_bits = 16;

  void validate() const {
    if (ring_bits != 16 && ring_bits != 32 && ring_bits != 64) {
      throw ConfigError("ring_bits must be 16, 32 or 64, got " +
                        std::to_string(ring_bits));
    }
    if (frac_bits <= 0 || 2 * frac_bits >= ring_bits) {
      throw ConfigError("frac_bits must satisfy 0 < f < ring_bits/2, got " +
                        std::to_string(frac_bits));
    }
  }

  constexpr Elem mask() const {
    return ring_bits == 64 ? ~Elem{0} : ((Elem{1} << ring_bits) - 1);
  }
  constexpr Elem sign_bit() const { return Elem{1} << (ring_bits - 1); }
  double scale() const { return std::ldexp(1.0, frac_bits); }
  /// Largest magnitude accepted by encode_fixed (exclusive).
  double max_magnitude() const {
    return std::ldexp(1.0, ring_bits - frac_bits - 1);
  }

  friend bool operator==(const FixedPointConfig&,
                         const FixedPointConfig&) = default;
};

// -- raw ring arithmetic ----------------------------------------------------

constexpr Elem reduce(Elem v, const FixedPointConfig& cfg) {
  return v & cfg.mask();
}
constexpr Elem add(Elem a, Elem b, const FixedPointConfig& cfg) {
  return (a + b) & cfg.mask();
}
constexpr Elem sub(Elem a, Elem b, const FixedPointConfig& cfg) {
  return (a - b) & cfg.mask();
}
constexpr Elem mul(Elem a, Elem b, const FixedPointConfig& cfg) {
  return (a * b) & cfg.mask();
}
constexpr Elem neg(Elem a, const FixedPointConfig& cfg) {
  return (Elem{0} - a) & cfg.mask();
}

/// Two's-complement interpretation of an ring_bits-wide element.
constexpr std::int64_t to_signed(Elem e, const FixedPointConfig& cfg) {
  if (cfg.ring_bits == 64) return static_cast<std::int64_t>(e);
  const int shift = 64 - cfg.ring_bits;
  return static_cast<std::int64_t>(e << shift) >> shift;
}

constexpr Elem from_signed(std::int64_t v, const FixedPointConfig& cfg) {
  return static_cast<Elem>(v) & cfg.mask();
}

constexpr bool is_negative(Elem e, const FixedPointConfig& cfg) {
  return (e & cfg.sign_bit()) != 0;
}

/// Arithmetic right shift by frac_bits (floor division by 2^f) on the signed
/// interpretation. Restores scale after a product of two encoded values.
constexpr Elem truncate(Elem e, const FixedPointConfig& cfg) {
  return from_signed(to_signed(e, cfg) >> cfg.frac_bits, cfg);
}

// -- encoding ----------------------------------------------------------------

inline Elem encode_fixed(double value, const FixedPointConfig& cfg) {
  if (!std::isfinite(value) || std::fabs(value) >= cfg.max_magnitude()) {
    throw EncodingError("value " + std::to_string(value) +
                        " outside fixed-point range");
  }
  const auto scaled = static_cast<std::int64_t>(std::llround(value * cfg.scale()));
  return from_signed(scaled, cfg);
}

inline double decode_fixed(Elem e, const FixedPointConfig& cfg) {
  return static_cast<double>(to_signed(e, cfg)) / cfg.scale();
}

/// Distance between two elements in units of the last place, measured on the
/// signed interpretation of their difference.
inline std::uint64_t ulp_distance(Elem a, Elem b, const FixedPointConfig& cfg) {
  const std::int64_t d = to_signed(sub(a, b, cfg), cfg);
  return d < 0 ? static_cast<std::uint64_t>(-(d + 1)) + 1
               : static_cast<std::uint64_t>(d);
}

// -- scalar policies ----------------------------------------------------------
//
// The layer templates are written once against a policy and instantiated for
// the ring (the real computation) and for double (the float twin used by the
// gradient checks). A policy exposes value_type, an accumulator that collects
// raw products, and finish() which applies the post-accumulation rescale.

struct RingArith {
  using value_type = Elem;
  FixedPointConfig cfg;

  value_type zero() const { return 0; }
  value_type add(value_type a, value_type b) const { return ring::add(a, b, cfg); }
  value_type sub(value_type a, value_type b) const { return ring::sub(a, b, cfg); }
  value_type neg(value_type a) const { return ring::neg(a, cfg); }
  /// Raw product, not yet rescaled.
  value_type mac(value_type acc, value_type a, value_type b) const {
    return acc + a * b;
  }
  value_type finish(value_type acc) const { return truncate(reduce(acc, cfg), cfg); }
  value_type mul(value_type a, value_type b) const { return finish(a * b); }
  bool greater(value_type a, value_type b) const {
    return to_signed(a, cfg) > to_signed(b, cfg);
  }
  bool nonnegative(value_type a) const { return !is_negative(a, cfg); }
  value_type from_double(double v) const { return encode_fixed(v, cfg); }
  double to_double(value_type v) const { return decode_fixed(v, cfg); }
};

struct FloatArith {
  using value_type = double;

  value_type zero() const { return 0.0; }
  value_type add(value_type a, value_type b) const { return a + b; }
  value_type sub(value_type a, value_type b) const { return a - b; }
  value_type neg(value_type a) const { return -a; }
  value_type mac(value_type acc, value_type a, value_type b) const {
    return acc + a * b;
  }
  value_type finish(value_type acc) const { return acc; }
  value_type mul(value_type a, value_type b) const { return a * b; }
  bool greater(value_type a, value_type b) const { return a > b; }
  bool nonnegative(value_type a) const { return a >= 0.0; }
  value_type from_double(double v) const { return v; }
  double to_double(value_type v) const { return v; }
};

}  // namespace splitfss::ring
