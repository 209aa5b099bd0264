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

// Key material shared by the point and comparison functions, and its
// canonical byte layout:
//
//   [1B party][1B domain_bits][16B root seed]
//   domain_bits x [16B seed correction][1B left bit][1B right bit][8B value correction]
//   [8B final correction]
//
// All integers little-endian. Point-function keys carry zero value corrections.

#include <cstdint>
#include <string>
#include <vector>

#include "splitfss/common/bytes.hpp"
#include "splitfss/fss/prg.hpp"

namespace splitfss::fss {

inline constexpr int kMaxDomainBits = 64;

struct CorrectionWord {
  Block seed;
  bool left_bit = false;
  bool right_bit = false;
  std::uint64_t value = 0;

  bool bit(int dir) const { return dir ? right_bit : left_bit; }
  friend bool operator==(const CorrectionWord&, const CorrectionWord&) = default;
};

struct FssKey {
  std::uint8_t party = 0;
  std::uint8_t domain_bits = 0;
  PrgSeed root;
  std::vector<CorrectionWord> levels;
  std::uint64_t final_correction = 0;

  friend bool operator==(const FssKey&, const FssKey&) = default;
};

struct DpfKey : FssKey {};
struct DcfKey : FssKey {};

/// Tree state of one party at one level.
struct NodeState {
  PrgSeed seed;
  bool t = false;
  std::uint64_t acc = 0;
};

inline std::size_t serialized_key_size(int domain_bits) {
  return 2 + 16 + static_cast<std::size_t>(domain_bits) * (16 + 1 + 1 + 8) + 8;
}

inline void check_domain(int domain_bits) {
  if (domain_bits < 1 || domain_bits > kMaxDomainBits) {
    throw ConfigError("FSS domain_bits must be in 1..64, got " + std::to_string(domain_bits));
  }
}

inline void check_input(int domain_bits, std::uint64_t x) {
  if (domain_bits < 64 && (x >> domain_bits) != 0) {
    throw ShapeError("FSS input does not fit " + std::to_string(domain_bits) + " bits");
  }
}

/// Bit i of x counted from the most significant of `bits` bits.
inline int input_bit(std::uint64_t x, int bits, int i) {
  return static_cast<int>((x >> (bits - 1 - i)) & 1);
}

inline void write_key(ByteWriter& w, const FssKey& k) {
  w.u8(k.party);
  w.u8(k.domain_bits);
  w.raw(k.root.to_bytes());
  for (const auto& cw : k.levels) {
    w.raw(cw.seed.to_bytes());
    w.u8(cw.left_bit);
    w.u8(cw.right_bit);
    w.u64(cw.value);
  }
  w.u64(k.final_correction);
}

inline void read_key(ByteReader& r, FssKey& k) {
  k.party = r.u8();
  if (k.party > 1) throw FormatError("FSS key: bad party tag " + std::to_string(k.party));
  k.domain_bits = r.u8();
  if (k.domain_bits < 1 || k.domain_bits > kMaxDomainBits) {
    throw FormatError("FSS key: bad domain_bits " + std::to_string(k.domain_bits));
  }
  k.root = Block::from_bytes(r.raw(16).first<16>());
  k.levels.resize(k.domain_bits);
  for (auto& cw : k.levels) {
    cw.seed = Block::from_bytes(r.raw(16).first<16>());
    const auto lb = r.u8(), rb = r.u8();
    if (lb > 1 || rb > 1) throw FormatError("FSS key: control bit byte not 0/1");
    cw.left_bit = lb;
    cw.right_bit = rb;
    cw.value = r.u64();
  }
  k.final_correction = r.u64();
}

template <typename Key>
Bytes serialize_key(const Key& k) {
  ByteWriter w(serialized_key_size(k.domain_bits));
  write_key(w, k);
  return w.take();
}

template <typename Key>
Key deserialize_key(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "FSS key");
  Key k;
  read_key(r, k);
  r.expect_end();
  return k;
}

}  // namespace splitfss::fss
