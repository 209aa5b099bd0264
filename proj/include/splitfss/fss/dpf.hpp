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

// Distributed point function: keys (k0, k1) with
// dpf_eval(0, k0, x) + dpf_eval(1, k1, x) = beta if x == alpha, else 0 (mod 2^64).

#include <cstdint>
#include <utility>
#include <vector>

#include "splitfss/fss/key.hpp"

namespace splitfss::fss {

inline std::uint64_t neg_if(bool neg, std::uint64_t v) { return neg ? std::uint64_t{0} - v : v; }

inline std::pair<DpfKey, DpfKey> dpf_keygen(int domain_bits, std::uint64_t alpha,
                                            std::uint64_t beta, Prng& rng) {
  check_domain(domain_bits);
  check_input(domain_bits, alpha);
  DpfKey k[2];
  PrgSeed s[2] = {rng.next_block(), rng.next_block()};
  bool t[2] = {false, true};
  for (int b = 0; b < 2; ++b) {
    k[b].party = static_cast<std::uint8_t>(b);
    k[b].domain_bits = static_cast<std::uint8_t>(domain_bits);
    k[b].root = s[b];
  }
  std::vector<CorrectionWord> cws(domain_bits);
  for (int i = 0; i < domain_bits; ++i) {
    const int a = input_bit(alpha, domain_bits, i);
    const Expansion e0 = prg_expand_seeds(s[0]);
    const Expansion e1 = prg_expand_seeds(s[1]);
    const int keep = a, lose = 1 - a;
    CorrectionWord& cw = cws[i];
    cw.seed = e0.seed[lose] ^ e1.seed[lose];
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
  const std::uint64_t fin = neg_if(t[1], beta - convert(s[0]) + convert(s[1]));
  for (auto& key : k) {
    key.levels = cws;
    key.final_correction = fin;
  }
  return {std::move(k[0]), std::move(k[1])};
}

/// Walks the tree for x, calling on_level(i, state) for the root (i = 0) and
/// after each of the domain_bits levels.
template <typename Visitor>
std::uint64_t dpf_eval_visit(int party, const DpfKey& key, std::uint64_t x, Visitor&& on_level) {
  if (party != key.party) throw ProtocolError("dpf_eval: key belongs to the other party");
  const int n = key.domain_bits;
  check_input(n, x);
  NodeState st{key.root, party == 1, 0};
  on_level(0, st);
  for (int i = 0; i < n; ++i) {
    const int dir = input_bit(x, n, i);
    const Expansion e = prg_expand_seeds(st.seed);
    const CorrectionWord& cw = key.levels[i];
    PrgSeed next = e.seed[dir];
    bool nt = e.bit[dir];
    if (st.t) {
      next ^= cw.seed;
      nt ^= cw.bit(dir);
    }
    st.seed = next;
    st.t = nt;
    on_level(i + 1, st);
  }
  return neg_if(party == 1, convert(st.seed) + (st.t ? key.final_correction : 0));
}

inline std::uint64_t dpf_eval(int party, const DpfKey& key, std::uint64_t x) {
  return dpf_eval_visit(party, key, x, [](int, const NodeState&) {});
}

/// Node states along the evaluation path, root first.
inline std::vector<NodeState> dpf_eval_trace(int party, const DpfKey& key, std::uint64_t x) {
  std::vector<NodeState> trace;
  dpf_eval_visit(party, key, x, [&](int, const NodeState& s) { trace.push_back(s); });
  return trace;
}

}  // namespace splitfss::fss
