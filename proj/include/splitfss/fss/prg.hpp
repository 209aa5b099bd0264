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

// Tree PRG for the FSS keys and the AES-CTR generator used for key generation
// and dealer randomness.
//
// Expansion of a seed s: Y_i = AES_K(s ^ i) ^ (s ^ i) for i = 0..3 under a
// fixed public key K (i is xored into the low word). Y_0 and Y_1 give the left
// and right child seeds, whose lowest bit is split off as the control bit.
// The low words of Y_2 and Y_3 are the left and right value words of the
// comparison tree. The frozen test vectors in fss_test pin this construction.

#include <cstdint>
#include <limits>

#include "splitfss/fss/aes.hpp"

namespace splitfss::fss {

using PrgSeed = Block;

/// Fixed public key of the tree PRG ("SplitFSS-PRG-v1\0").
inline constexpr Block kPrgKey{0x53534674696c7053ULL, 0x0031762d4752502dULL};

inline const Aes128& prg_cipher() {
  static const Aes128 cipher(kPrgKey);
  return cipher;
}

struct Expansion {
  PrgSeed seed[2];     // [0] left, [1] right; control bit cleared
  bool bit[2];
  std::uint64_t value[2];
};

/// Seed words only (two AES calls); the point-function tree needs no values.
inline Expansion prg_expand_seeds(const PrgSeed& s) {
  Block in[2] = {s, s ^ Block{1, 0}};
  Block y[2];
  prg_cipher().encrypt_n<2>(in, y);
  Expansion e{};
  for (int i = 0; i < 2; ++i) {
    y[i] ^= in[i];
    e.bit[i] = y[i].lsb();
    y[i].lo &= ~std::uint64_t{1};
    e.seed[i] = y[i];
  }
  return e;
}

inline Expansion prg_expand(const PrgSeed& s) {
  Block in[4] = {s, s ^ Block{1, 0}, s ^ Block{2, 0}, s ^ Block{3, 0}};
  Block y[4];
  prg_cipher().encrypt_n<4>(in, y);
  Expansion e{};
  for (int i = 0; i < 4; ++i) y[i] ^= in[i];
  for (int i = 0; i < 2; ++i) {
    e.bit[i] = y[i].lsb();
    y[i].lo &= ~std::uint64_t{1};
    e.seed[i] = y[i];
    e.value[i] = y[2 + i].lo;
  }
  return e;
}

/// Maps a leaf seed to a ring word.
inline std::uint64_t convert(const PrgSeed& s) { return s.hi; }

/// AES-CTR random generator. Satisfies UniformRandomBitGenerator.
class Prng {
 public:
  using result_type = std::uint64_t;

  explicit Prng(const Block& key) : cipher_(key) {}
  /// Key derived from a 64-bit seed and a stream label, so independent
  /// consumers of one experiment seed get disjoint streams.
  explicit Prng(std::uint64_t seed, std::uint64_t stream = 0)
      : cipher_(Block{seed, stream ^ 0x9e3779b97f4a7c15ULL}) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    if (pos_ == kBuffered * 2) refill();
    const Block& b = out_[pos_ / 2];
    return (pos_++ & 1) ? b.hi : b.lo;
  }
  Block next_block() {
    Block b;
    b.lo = next_u64();
    b.hi = next_u64();
    return b;
  }
  bool next_bit() { return next_u64() & 1; }

 private:
  static constexpr std::size_t kBuffered = 8;

  void refill() {
    Block in[kBuffered];
    for (auto& b : in) b = Block{counter_++, 0};
    cipher_.encrypt_n<kBuffered>(in, out_);
    pos_ = 0;
  }

  Aes128 cipher_;
  std::uint64_t counter_ = 0;
  Block out_[kBuffered];
  std::size_t pos_ = kBuffered * 2;
};

}  // namespace splitfss::fss
