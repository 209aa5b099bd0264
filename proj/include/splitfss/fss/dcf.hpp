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

// Distributed comparison function: keys (k0, k1) with
// dcf_eval(0, k0, x) + dcf_eval(1, k1, x) = beta if x <= alpha, else 0 (mod 2^64).
//
// Each level carries a value correction that pays out beta when the
// evaluation path leaves the alpha path to the left (x < alpha there). The
// final correction adds beta at the leaf alpha itself.

#include <cstdint>
#include <cstring>
#include <span>
#include <utility>
#include <vector>

#include "splitfss/fss/dpf.hpp"

namespace splitfss::fss {

inline std::pair<DcfKey, DcfKey> dcf_keygen(int domain_bits, std::uint64_t alpha,
                                            std::uint64_t beta, Prng& rng) {
  check_domain(domain_bits);
  check_input(domain_bits, alpha);
  DcfKey k[2];
  PrgSeed s[2] = {rng.next_block(), rng.next_block()};
  bool t[2] = {false, true};
  for (int b = 0; b < 2; ++b) {
    k[b].party = static_cast<std::uint8_t>(b);
    k[b].domain_bits = static_cast<std::uint8_t>(domain_bits);
    k[b].root = s[b];
  }
  std::uint64_t v_alpha = 0;
  std::vector<CorrectionWord> cws(domain_bits);
  for (int i = 0; i < domain_bits; ++i) {
    const int a = input_bit(alpha, domain_bits, i);
    const Expansion e0 = prg_expand(s[0]);
    const Expansion e1 = prg_expand(s[1]);
    const int keep = a, lose = 1 - a;
    CorrectionWord& cw = cws[i];
    cw.seed = e0.seed[lose] ^ e1.seed[lose];
    std::uint64_t v_cw = neg_if(t[1], e1.value[lose] - e0.value[lose] - v_alpha);
    if (lose == 0) v_cw += neg_if(t[1], beta);
    cw.value = v_cw;
    v_alpha = v_alpha - e1.value[keep] + e0.value[keep] + neg_if(t[1], v_cw);
    cw.left_bit = e0.bit[0] ^ e1.bit[0] ^ a ^ 1;
    cw.right_bit = e0.bit[1] ^ e1.bit[1] ^ a;
    const Expansion* e[2] = {&e0, &e1};
    for (int b = 0; b < 2; ++b) {
      PrgSeed next = e[b]->seed[keep];
      bool nt = e[b]->bit[keep];
      if (t[b]) {
        next ^= cw.seed;
        nt ^= cw.bit(keep);
      }
      s[b] = next;
      t[b] = nt;
    }
  }
  const std::uint64_t fin = neg_if(t[1], convert(s[1]) - convert(s[0]) - v_alpha + beta);
  for (auto& key : k) {
    key.levels = cws;
    key.final_correction = fin;
  }
  return {std::move(k[0]), std::move(k[1])};
}

template <typename Visitor>
std::uint64_t dcf_eval_visit(int party, const DcfKey& key, std::uint64_t x, Visitor&& on_level) {
  if (party != key.party) throw ProtocolError("dcf_eval: key belongs to the other party");
  const int n = key.domain_bits;
  check_input(n, x);
  const bool neg = party == 1;
  NodeState st{key.root, party == 1, 0};
  on_level(0, st);
  for (int i = 0; i < n; ++i) {
    const int dir = input_bit(x, n, i);
    const Expansion e = prg_expand(st.seed);
    const CorrectionWord& cw = key.levels[i];
    PrgSeed next = e.seed[dir];
    bool nt = e.bit[dir];
    std::uint64_t v = e.value[dir];
    if (st.t) {
      next ^= cw.seed;
      nt ^= cw.bit(dir);
      v += cw.value;
    }
    st.acc += neg_if(neg, v);
    st.seed = next;
    st.t = nt;
    on_level(i + 1, st);
  }
  return st.acc + neg_if(neg, convert(st.seed) + (st.t ? key.final_correction : 0));
}

inline std::uint64_t dcf_eval(int party, const DcfKey& key, std::uint64_t x) {
  return dcf_eval_visit(party, key, x, [](int, const NodeState&) {});
}

/// Evaluates a key directly from its serialized form, without materializing
/// the correction words.
inline std::uint64_t dcf_eval_serialized(int party, std::span<const std::uint8_t> key,
                                         std::uint64_t x) {
  if (key.size() < 2) throw FormatError("DCF key: truncated");
  const int n = key[1];
  if (key[0] != party) throw ProtocolError("dcf_eval: key belongs to the other party");
  if (n < 1 || n > kMaxDomainBits || key.size() != serialized_key_size(n)) {
    throw FormatError("DCF key: bad length or domain");
  }
  check_input(n, x);
  auto u64_at = [&](std::size_t off) {
    std::uint64_t v;
    std::memcpy(&v, key.data() + off, 8);
    return v;
  };
  auto block_at = [&](std::size_t off) { return Block{u64_at(off), u64_at(off + 8)}; };
  const bool neg = party == 1;
  PrgSeed seed = block_at(2);
  bool t = party == 1;
  std::uint64_t acc = 0;
  for (int i = 0; i < n; ++i) {
    const std::size_t off = 18 + static_cast<std::size_t>(i) * 26;
    const int dir = input_bit(x, n, i);
    const Expansion e = prg_expand(seed);
    PrgSeed next = e.seed[dir];
    bool nt = e.bit[dir];
    std::uint64_t v = e.value[dir];
    if (t) {
      next ^= block_at(off);
      nt ^= key[off + 16 + dir] != 0;
      v += u64_at(off + 18);
    }
    acc += neg_if(neg, v);
    seed = next;
    t = nt;
  }
  return acc + neg_if(neg, convert(seed) + (t ? u64_at(key.size() - 8) : 0));
}

inline std::vector<NodeState> dcf_eval_trace(int party, const DcfKey& key, std::uint64_t x) {
  std::vector<NodeState> trace;
  dcf_eval_visit(party, key, x, [&](int, const NodeState& s) { trace.push_back(s); });
  return trace;
}

}  // namespace splitfss::fss
