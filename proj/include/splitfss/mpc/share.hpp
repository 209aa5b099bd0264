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

// Additive sharing over Z_{2^l} and the share-local linear operations.

#include <cstdint>
#include <utility>

#include "splitfss/fss/prg.hpp"
#include "splitfss/ring/tensor.hpp"

namespace splitfss::mpc {

using ring::Elem;
using ring::FixedPointConfig;
using ring::RingTensor;
using ring::Shape;

struct AdditiveShare {
  int party = 0;
  RingTensor tensor;
};

inline RingTensor random_tensor(Shape shape, fss::Prng& rng, const FixedPointConfig& cfg) {
  RingTensor t(std::move(shape));
  const Elem mask = cfg.mask();
  for (auto& v : t.values()) v = rng.next_u64() & mask;
  return t;
}

/// share0 uniform, share1 = secret - share0.
inline std::pair<AdditiveShare, AdditiveShare> share(const RingTensor& secret, fss::Prng& rng,
                                                     const FixedPointConfig& cfg) {
  AdditiveShare s0{0, random_tensor(secret.shape(), rng, cfg)};
  AdditiveShare s1{1, RingTensor(secret.shape())};
  for (std::size_t i = 0; i < secret.size(); ++i) {
    s1.tensor[i] = ring::sub(secret[i], s0.tensor[i], cfg);
  }
  return {std::move(s0), std::move(s1)};
}

inline RingTensor reconstruct(const RingTensor& a, const RingTensor& b,
                              const FixedPointConfig& cfg) {
  ring::require_same_shape(a.shape(), b.shape(), "reconstruct");
  RingTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ring::add(a[i], b[i], cfg);
  return out;
}

inline RingTensor reconstruct(const AdditiveShare& a, const AdditiveShare& b,
                              const FixedPointConfig& cfg) {
  if (a.party == b.party) throw ProtocolError("reconstruct: both shares from one party");
  return reconstruct(a.tensor, b.tensor, cfg);
}

// -- share-local linear operations ---------------------------------------------

inline RingTensor add(const RingTensor& a, const RingTensor& b, const FixedPointConfig& cfg) {
  return reconstruct(a, b, cfg);
}

inline RingTensor sub(const RingTensor& a, const RingTensor& b, const FixedPointConfig& cfg) {
  ring::require_same_shape(a.shape(), b.shape(), "sub");
  RingTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ring::sub(a[i], b[i], cfg);
  return out;
}

/// Adds a public tensor to a shared one: only party 0 adds.
inline RingTensor add_public(int party, const RingTensor& share, const RingTensor& pub,
                             const FixedPointConfig& cfg) {
  return party == 0 ? add(share, pub, cfg) : share;
}

/// Share of j * pub - mask_j, i.e. a sharing of pub - mask.
inline RingTensor unmask(int party, const RingTensor& pub, const RingTensor& mask_share,
                         const FixedPointConfig& cfg) {
  ring::require_same_shape(pub.shape(), mask_share.shape(), "unmask");
  RingTensor out(pub.shape());
  for (std::size_t i = 0; i < pub.size(); ++i) {
    out[i] = ring::sub(party == 0 ? pub[i] : 0, mask_share[i], cfg);
  }
  return out;
}

/// Local fixed-point truncation: party 0 shifts its share arithmetically,
/// party 1 negates, shifts and negates. Off by at most one unit unless the
/// shares wrap, which happens with probability about |x| / 2^(l-1).
inline Elem truncate_share(int party, Elem v, const FixedPointConfig& cfg) {
  if (party == 0) return ring::truncate(v, cfg);
  return ring::neg(ring::truncate(ring::neg(v, cfg), cfg), cfg);
}

inline RingTensor truncate_local(int party, RingTensor z, const FixedPointConfig& cfg) {
  for (auto& v : z.values()) v = truncate_share(party, v, cfg);
  return z;
}

/// Share times a public fixed-point scalar, truncated.
inline RingTensor mul_public(int party, const RingTensor& share, Elem c,
                             const FixedPointConfig& cfg) {
  RingTensor out(share.shape());
  for (std::size_t i = 0; i < share.size(); ++i) {
    out[i] = truncate_share(party, ring::mul(share[i], c, cfg), cfg);
  }
  return out;
}

/// Raw matrix product a[m,k] * b[k,n] over the ring, no rescaling.
inline RingTensor matmul(const RingTensor& a, const RingTensor& b, const FixedPointConfig& cfg) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + ring::shape_str(a.shape()) + " x " + ring::shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  RingTensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    Elem* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Elem av = a[i * k + p];
      const Elem* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  for (auto& v : out.values()) v = ring::reduce(v, cfg);
  return out;
}

inline RingTensor transpose(const RingTensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix");
  const std::size_t m = a.dim(0), n = a.dim(1);
  RingTensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

inline RingTensor hadamard(const RingTensor& a, const RingTensor& b, const FixedPointConfig& cfg) {
  ring::require_same_shape(a.shape(), b.shape(), "hadamard");
  RingTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ring::mul(a[i], b[i], cfg);
  return out;
}

}  // namespace splitfss::mpc
