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

// AES-128 encryption with AES-NI, plus the 128-bit block type used as FSS seed.

#include <wmmintrin.h>
#include <emmintrin.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <span>

namespace splitfss::fss {

/// 128-bit block. Byte i of the serialized form is byte i of the
/// little-endian pair (lo, hi).
struct Block {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  static Block from_bytes(std::span<const std::uint8_t, 16> b) {
    Block out;
    std::memcpy(&out.lo, b.data(), 8);
    std::memcpy(&out.hi, b.data() + 8, 8);
    return out;
  }
  std::array<std::uint8_t, 16> to_bytes() const {
    std::array<std::uint8_t, 16> out{};
    std::memcpy(out.data(), &lo, 8);
    std::memcpy(out.data() + 8, &hi, 8);
    return out;
  }

  __m128i m128() const {
    return _mm_set_epi64x(static_cast<long long>(hi), static_cast<long long>(lo));
  }
  static Block from_m128(__m128i v) {
    Block out;
    _mm_storeu_si128(reinterpret_cast<__m128i*>(&out), v);
    return out;
  }

  bool lsb() const { return lo & 1; }

  Block& operator^=(const Block& o) {
    lo ^= o.lo;
    hi ^= o.hi;
    return *this;
  }
  friend Block operator^(Block a, const Block& b) { return a ^= b; }
  friend bool operator==(const Block&, const Block&) = default;
};

static_assert(sizeof(Block) == 16);

namespace detail {

template <int Rcon>
inline __m128i aes_key_step(__m128i key) {
  __m128i gen = _mm_aeskeygenassist_si128(key, Rcon);
  gen = _mm_shuffle_epi32(gen, 0xff);
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  return _mm_xor_si128(key, gen);
}

}  // namespace detail

class Aes128 {
 public:
  explicit Aes128(const Block& key) {
    rk_[0] = key.m128();
    rk_[1] = detail::aes_key_step<0x01>(rk_[0]);
    rk_[2] = detail::aes_key_step<0x02>(rk_[1]);
    rk_[3] = detail::aes_key_step<0x04>(rk_[2]);
    rk_[4] = detail::aes_key_step<0x08>(rk_[3]);
    rk_[5] = detail::aes_key_step<0x10>(rk_[4]);
    rk_[6] = detail::aes_key_step<0x20>(rk_[5]);
    rk_[7] = detail::aes_key_step<0x40>(rk_[6]);
    rk_[8] = detail::aes_key_step<0x80>(rk_[7]);
    rk_[9] = detail::aes_key_step<0x1b>(rk_[8]);
    rk_[10] = detail::aes_key_step<0x36>(rk_[9]);
  }

  Block encrypt(const Block& in) const {
    __m128i s = _mm_xor_si128(in.m128(), rk_[0]);
    for (int r = 1; r < 10; ++r) s = _mm_aesenc_si128(s, rk_[r]);
    return Block::from_m128(_mm_aesenclast_si128(s, rk_[10]));
  }

  /// Encrypts N independent blocks with interleaved rounds.
  template <std::size_t N>
  void encrypt_n(const Block* in, Block* out) const {
    __m128i s[N];
    for (std::size_t i = 0; i < N; ++i) s[i] = _mm_xor_si128(in[i].m128(), rk_[0]);
    for (int r = 1; r < 10; ++r) {
      for (std::size_t i = 0; i < N; ++i) s[i] = _mm_aesenc_si128(s[i], rk_[r]);
    }
    for (std::size_t i = 0; i < N; ++i) {
      out[i] = Block::from_m128(_mm_aesenclast_si128(s[i], rk_[10]));
    }
  }

 private:
  __m128i rk_[11];
};

}  // namespace splitfss::fss
