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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <future>
#include <random>

#include "splitfss/mpc/protocol.hpp"
#include "splitfss/ring/layers.hpp"
#include "test_util.hpp"
#include "two_party.hpp"

namespace splitfss::mpc {
namespace {

using testing::Deal;
using testing::run_two;

using net::Party;
using ring::encode_fixed;
using ring::decode_fixed;
using ring::ulp_distance;

const FixedPointConfig kCfg{64, 16};
const FixedPointConfig kSmall{16, 4};

std::pair<AdditiveShare, AdditiveShare> share_of(const RingTensor& t, std::uint64_t seed,
                                                 const FixedPointConfig& cfg = kCfg) {
  fss::Prng rng(seed, 99);
  return share(t, rng, cfg);
}

// -- sharing -------------------------------------------------------------------------

TEST(Share, ReconstructRoundTrip) {
  std::mt19937_64 gen(1);
  fss::Prng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const RingTensor x = random_tensor({1 + gen() % 40}, rng, kCfg);
    auto [a, b] = share(x, rng, kCfg);
    EXPECT_EQ(reconstruct(a, b, kCfg), x);
  }
}

TEST(Share, FirstShareUniform) {
  fss::Prng rng(2);
  const RingTensor secret({125000}, encode_fixed(3.5, kCfg));  // 10^6 bytes of share0
  auto [a, b] = share(secret, rng, kCfg);
  const auto bytes = testing::all_bytes(a.tensor.span());
  ASSERT_EQ(bytes.size(), 1000000u);
  EXPECT_GT(testing::byte_uniformity_pvalue(bytes), 0.01);
}

TEST(Share, ZeroSharesAreOpposite) {
  fss::Prng rng(3);
  auto [a, b] = share(RingTensor({64}), rng, kCfg);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(a.tensor[i], ring::neg(b.tensor[i], kCfg));
  EXPECT_NE(a.tensor, RingTensor({64}));
}

TEST(Share, SameSidedReconstructRejected) {
  fss::Prng rng(4);
  auto [a, b] = share(RingTensor({2}), rng, kCfg);
  EXPECT_THROW(reconstruct(a, a, kCfg), ProtocolError);
}

TEST(Share, LocalLinearOps) {
  std::mt19937_64 gen(5);
  const auto x = testing::random_fixed(gen, {50}, 100, kCfg);
  const auto y = testing::random_fixed(gen, {50}, 100, kCfg);
  auto [x0, x1] = share_of(x, 1);
  auto [y0, y1] = share_of(y, 2);
  EXPECT_EQ(reconstruct(add(x0.tensor, y0.tensor, kCfg), add(x1.tensor, y1.tensor, kCfg), kCfg),
            add(x, y, kCfg));
  EXPECT_EQ(reconstruct(add_public(0, x0.tensor, y, kCfg), add_public(1, x1.tensor, y, kCfg), kCfg),
            add(x, y, kCfg));
  // unmask: shares of pub - mask
  EXPECT_EQ(reconstruct(unmask(0, y, x0.tensor, kCfg), unmask(1, y, x1.tensor, kCfg), kCfg),
            sub(y, x, kCfg));
}

// -- dealer material --------------------------------------------------------------------

TEST(Dealer, ScalarTriplesSatisfyProduct) {
  Dealer d(kCfg, 11);
  auto [t0, t1] = d.elem_triple(1000);
  const RingTensor a = reconstruct(t0.a, t1.a, kCfg);
  const RingTensor b = reconstruct(t0.b, t1.b, kCfg);
  const RingTensor c = reconstruct(t0.c, t1.c, kCfg);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_EQ(c[i], a[i] * b[i]);
}

TEST(Dealer, MatrixTripleSatisfiesProduct) {
  Dealer d(kCfg, 12);
  auto [t0, t1] = d.mat_triple(1, 256, 100);
  const RingTensor a = reconstruct(t0.a, t1.a, kCfg);
  const RingTensor b = reconstruct(t0.b, t1.b, kCfg);
  const RingTensor c = reconstruct(t0.c, t1.c, kCfg);
  ASSERT_EQ(c.shape(), (Shape{1, 100}));
  for (std::size_t j = 0; j < 100; ++j) {
    Elem acc = 0;  // independent integer oracle
    for (std::size_t p = 0; p < 256; ++p) acc += a[p] * b[p * 100 + j];
    EXPECT_EQ(c[j], acc);
  }
}

TEST(Dealer, SmallRingTriplesStayInRing) {
  Dealer d(kSmall, 13);
  auto [t0, t1] = d.elem_triple(500);
  for (const auto* t : {&t0, &t1})
    for (const auto* x : {&t->a, &t->b, &t->c})
      for (auto v : x->values()) EXPECT_LE(v, 0xffffu);
}

TEST(Material, ReuseIsRejected) {
  Deal d(kCfg);
  d.writer.elem_triple(4);
  MaterialReader r(d.t0, kCfg);
  auto t = r.elem_triple(4);
  EXPECT_FALSE(t.used());
  t.take();
  EXPECT_TRUE(t.used());
  EXPECT_THROW(t.take(), MaterialError);
}

TEST(Material, ExhaustionIsDetected) {
  Deal d(kCfg);
  d.writer.elem_triple(4);
  MaterialReader r(d.t0, kCfg);
  r.elem_triple(4);
  EXPECT_THROW(r.elem_triple(4), MaterialError);
}

TEST(Material, OutOfStepConsumptionIsRejected) {
  Deal d(kCfg);
  d.writer.elem_triple(4);
  d.writer.mat_triple(2, 3, 4);
  MaterialReader r(d.t0, kCfg);
  EXPECT_THROW(r.elem_triple(5), ProtocolError);
  EXPECT_THROW(r.elem_triple(4), ProtocolError);  // next record is the matrix triple
}

TEST(Material, SignMaterialEncodesMaskBits) {
  Deal d(kCfg);
  d.writer.sign(10);
  MaterialReader r0(d.t0, kCfg), r1(d.t1, kCfg);
  auto m0 = r0.sign_mask(10).take();
  auto m1 = r1.sign_mask(10).take();
  const RingTensor r = reconstruct(m0.r, m1.r, kCfg);
  const RingTensor msb = reconstruct(m0.msb, m1.msb, kCfg);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(msb[i], r[i] >> 63);
  auto k0 = r0.sign_keys(10).take();
  EXPECT_EQ(k0.domain_bits, 63);
  EXPECT_EQ(k0.keys.size(), 10 * fss::serialized_key_size(63));
}

TEST(Material, SignKeysAreChunked) {
  Deal d(kSmall);
  d.writer.sign(kKeyChunk + 5);
  EXPECT_EQ(d.t0.pending(), 3u);  // mask, full chunk, remainder
  MaterialReader r(d.t0, kSmall);
  r.sign_mask(kKeyChunk + 5);
  EXPECT_EQ(r.sign_keys(kKeyChunk).take().count, kKeyChunk);
  EXPECT_EQ(r.sign_keys(5).take().count, 5u);
}

TEST(Material, TapeRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "splitfss_tape_test.bin";
  Dealer a(kCfg, 21), b(kCfg, 21);
  MemoryTape m0, m1;
  {
    TapeWriter w0(path.string(), 0, 0xabcdef);
    MemoryTape sink1;
    MaterialWriter tw(a, w0, sink1);
    tw.elem_triple(8);
    tw.sign(3);
    tw.mat_triple(2, 3, 4);
    tw.finish();
  }
  MaterialWriter mw(b, m0, m1);
  mw.elem_triple(8);
  mw.sign(3);
  mw.mat_triple(2, 3, 4);

  TapeReader tape(path.string(), 0, 0xabcdef);
  for (int i = 0; i < 4; ++i) {
    auto x = tape.next();
    auto y = m0.next();
    EXPECT_EQ(x.type, y.type);
    EXPECT_EQ(x.bytes, y.bytes);
  }
  EXPECT_THROW(tape.next(), MaterialError);
  EXPECT_THROW(TapeReader(path.string(), 1, 0xabcdef), ProtocolError);
  EXPECT_THROW(TapeReader(path.string(), 0, 0x1234), ProtocolError);
  std::filesystem::remove(path);
  EXPECT_THROW(TapeReader(path.string(), 0, 0), ConfigError);
}

TEST(Material, TruncatedTapeIsRejected) {
  const auto path = std::filesystem::temp_directory_path() / "splitfss_tape_trunc.bin";
  {
    Dealer a(kCfg, 22);
    TapeWriter w0(path.string(), 0, 1);
    MemoryTape sink1;
    MaterialWriter tw(a, w0, sink1);
    tw.elem_triple(100);
    tw.finish();
  }
  std::filesystem::resize_file(path, 200);
  TapeReader tape(path.string(), 0, 1);
  EXPECT_THROW(tape.next(), FormatError);
  std::filesystem::remove(path);
}

// -- Beaver products ----------------------------------------------------------------------

TEST(Beaver, ZeroFactorGivesZero) {
  Deal d(kCfg);
  d.writer.elem_triple(16);
  std::mt19937_64 gen(30);
  const auto x = testing::random_fixed(gen, {16}, 50, kCfg);
  auto [x0, x1] = share_of(x, 1);
  auto [z0, z1] = share_of(RingTensor({16}), 2);
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return beaver_mul(c, c.party ? x1.tensor : x0.tensor, c.party ? z1.tensor : z0.tensor, true);
  });
  EXPECT_EQ(reconstruct(r0, r1, kCfg), RingTensor({16}));
}

TEST(Beaver, FixedPointProduct) {
  Deal d(kCfg);
  d.writer.elem_triple(1);
  auto [x0, x1] = share_of(RingTensor({1}, encode_fixed(1.5, kCfg)), 3);
  auto [y0, y1] = share_of(RingTensor({1}, encode_fixed(2.0, kCfg)), 4);
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return beaver_mul(c, c.party ? x1.tensor : x0.tensor, c.party ? y1.tensor : y0.tensor, true);
  });
  EXPECT_LE(ulp_distance(reconstruct(r0, r1, kCfg)[0], encode_fixed(3.0, kCfg), kCfg), 1u);
}

TEST(Beaver, RawProductIsExact) {
  Deal d(kCfg);
  d.writer.elem_triple(200);
  fss::Prng rng(5);
  const RingTensor x = random_tensor({200}, rng, kCfg), y = random_tensor({200}, rng, kCfg);
  auto [x0, x1] = share_of(x, 5);
  auto [y0, y1] = share_of(y, 6);
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return beaver_mul(c, c.party ? x1.tensor : x0.tensor, c.party ? y1.tensor : y0.tensor, false);
  });
  EXPECT_EQ(reconstruct(r0, r1, kCfg), hadamard(x, y, kCfg));
}

TEST(Beaver, SecureFcMatchesPlaintextWithin256Ulp) {
  // 1000 instances of a 256 -> 100 layer: 10 weight draws x 100 inputs.
  const ring::RingArith ar{kCfg};
  std::mt19937_64 gen(31);
  std::uint64_t worst = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = testing::random_fixed(gen, {100, 256}, 1.0, kCfg);
    const auto w = testing::random_fixed(gen, {100, 256}, 0.0625, kCfg);
    const auto b = testing::random_fixed(gen, {100}, 0.0625, kCfg);
    Deal d(kCfg, 100 + rep);
    deal::fc(d.writer, 100, 256, 100);
    auto [x0, x1] = share_of(x, 10 + rep);
    auto [w0, w1] = share_of(w, 20 + rep);
    auto [b0, b1] = share_of(b, 30 + rep);
    auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
      return c.party ? secure_fc(c, x1.tensor, w1.tensor, b1.tensor)
                     : secure_fc(c, x0.tensor, w0.tensor, b0.tensor);
    });
    const RingTensor got = reconstruct(r0, r1, kCfg);
    const RingTensor want = ring::fc(ar, x, w, b);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, ulp_distance(got[i], want[i], kCfg));
  }
  EXPECT_LE(worst, 256u);
}

TEST(Beaver, SecureMatmulOnSmallRing) {
  Deal d(kSmall);
  d.writer.mat_triple(3, 4, 5);
  fss::Prng rng(6);
  const RingTensor x = random_tensor({3, 4}, rng, kSmall), y = random_tensor({4, 5}, rng, kSmall);
  auto [x0, x1] = share_of(x, 7, kSmall);
  auto [y0, y1] = share_of(y, 8, kSmall);
  auto [r0, r1] = run_two(kSmall, d.t0, d.t1, [&](const MpcContext& c) {
    return beaver_matmul(c, c.party ? x1.tensor : x0.tensor, c.party ? y1.tensor : y0.tensor, false);
  });
  EXPECT_EQ(reconstruct(r0, r1, kSmall), matmul(x, y, kSmall));
}

TEST(Beaver, ShapeMismatchThrows) {
  Deal d(kCfg);
  MaterialReader r(d.t0, kCfg);
  MpcContext c{0, kCfg, nullptr, &r};
  EXPECT_THROW(beaver_mul(c, RingTensor({2}), RingTensor({3}), true), ShapeError);
  EXPECT_THROW(beaver_matmul(c, RingTensor({2, 3}), RingTensor({2, 3})), ShapeError);
}

TEST(Beaver, OpenedValuesAreUniform) {
  // 10^4 products of the same fixed secrets: epsilon and delta seen by a
  // server must look uniform.
  Deal d(kCfg, 40);
  d.writer.elem_triple(10000);
  const RingTensor x({10000}, encode_fixed(2.25, kCfg)), y({10000}, encode_fixed(-7.0, kCfg));
  auto [x0, x1] = share_of(x, 9);
  auto [y0, y1] = share_of(y, 10);
  Bytes opened;
  run_two(
      kCfg, d.t0, d.t1,
      [&](const MpcContext& c) {
        return beaver_mul(c, c.party ? x1.tensor : x0.tensor, c.party ? y1.tensor : y0.tensor, true);
      },
      [&](net::Direction dir, net::MsgType t, std::span<const std::uint8_t> p) {
        if (dir == net::Direction::kReceived && t == net::MsgType::kOpen) opened.assign(p.begin(), p.end());
      });
  ASSERT_EQ(opened.size(), 2u * 10000 * 8);
  // The peer's shares of eps/delta are what server1 receives; its own
  // shares plus these reconstruct the opened values, and both are masks
  // of the fixed secrets by uniform triple components.
  const std::span<const std::uint8_t> eps(opened.data(), 80000), del(opened.data() + 80000, 80000);
  EXPECT_GT(testing::byte_uniformity_pvalue(eps), 0.01);
  EXPECT_GT(testing::byte_uniformity_pvalue(del), 0.01);
}

// -- truncation ------------------------------------------------------------------------

TEST(Truncation, IdentityProduct) {
  auto [x0, x1] = share_of(RingTensor({1}, encode_fixed(4.0, kCfg)), 11);
  const Elem one = encode_fixed(1.0, kCfg);
  const RingTensor z0 = truncate_local(0, hadamard(x0.tensor, RingTensor({1}, one), kCfg), kCfg);
  const RingTensor z1 = truncate_local(1, hadamard(x1.tensor, RingTensor({1}, one), kCfg), kCfg);
  EXPECT_LE(ulp_distance(reconstruct(z0, z1, kCfg)[0], encode_fixed(4.0, kCfg), kCfg), 1u);
}

std::size_t truncation_failures(double bound_x, double bound_y, std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  fss::Prng rng(seed);
  const ring::RingArith ar{kCfg};
  std::size_t failures = 0;
  constexpr std::size_t kBlock = 10000;
  for (std::size_t done = 0; done < trials; done += kBlock) {
    const auto x = testing::random_fixed(gen, {kBlock}, bound_x, kCfg);
    const auto y = testing::random_fixed(gen, {kBlock}, bound_y, kCfg);
    const RingTensor z = hadamard(x, y, kCfg);
    auto [z0, z1] = share(z, rng, kCfg);
    const RingTensor t = reconstruct(truncate_local(0, z0.tensor, kCfg),
                                     truncate_local(1, z1.tensor, kCfg), kCfg);
    for (std::size_t i = 0; i < kBlock; ++i) {
      if (ulp_distance(t[i], ar.mul(x[i], y[i]), kCfg) > 1) ++failures;
    }
  }
  return failures;
}

TEST(Truncation, MillionInRangeProductsNeverFail) {
  // Model-scale operands: activations and weights well inside +-16.
  EXPECT_EQ(truncation_failures(16.0, 16.0, 1000000, 50), 0u);
}

TEST(Truncation, BoundaryProbeFailsMeasurably) {
  // Products near 2^(l-2) in raw (pre-shift) magnitude: |x*y| * 2^16 ~ 2^62.
  const double b = std::ldexp(1.0, 15);  // |x|,|y| <= 2^15 -> raw product up to 2^62
  const std::size_t trials = 100000;
  const std::size_t f = truncation_failures(b, b, trials, 51);
  const double rate = static_cast<double>(f) / trials;
  RecordProperty("boundary_failure_rate", std::to_string(rate));
  // Raw |z| is roughly uniform-product distributed up to 2^62, so failures
  // occur with probability E|z|/2^63, about 1/8 here.
  EXPECT_GT(rate, 0.02);
  EXPECT_LT(rate, 0.3);
}

// -- sign test and ReLU -------------------------------------------------------------------

TEST(SecureRelu, ExhaustiveSmallRing) {
  // Every element of Z_2^16 as the input.
  const std::size_t n = 1u << 16;
  RingTensor x({n});
  for (std::size_t i = 0; i < n; ++i) x[i] = i;
  Deal d(kSmall, 60);
  deal::relu(d.writer, n);
  auto [x0, x1] = share_of(x, 12, kSmall);
  auto [r0, r1] = run_two(kSmall, d.t0, d.t1, [&](const MpcContext& c) {
    return secure_relu(c, c.party ? x1.tensor : x0.tensor);
  });
  const RingTensor y = reconstruct(r0.y, r1.y, kSmall);
  const RingTensor b = reconstruct(r0.sign, r1.sign, kSmall);
  const ring::RingArith ar{kSmall};
  const RingTensor want = ring::relu(ar, x);
  std::size_t mismatches = 0, sign_errors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mismatches += y[i] != want[i];
    sign_errors += b[i] != (i < 0x8000 ? 1u : 0u);
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_EQ(sign_errors, 0u);
}

TEST(SecureRelu, RandomValuesFullRing) {
  const std::size_t n = 100000;
  std::mt19937_64 gen(61);
  const auto x = testing::random_fixed(gen, {n}, 1e6, kCfg);
  Deal d(kCfg, 61);
  deal::relu(d.writer, n);
  auto [x0, x1] = share_of(x, 13);
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return secure_relu(c, c.party ? x1.tensor : x0.tensor);
  });
  const RingTensor y = reconstruct(r0.y, r1.y, kCfg);
  const RingTensor b = reconstruct(r0.sign, r1.sign, kCfg);
  const ring::RingArith ar{kCfg};
  const RingTensor want = ring::relu(ar, x);
  std::size_t sign_errors = 0;
  std::uint64_t worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sign_errors += b[i] != (ar.nonnegative(x[i]) ? 1u : 0u);
    worst = std::max(worst, ulp_distance(y[i], want[i], kCfg));
  }
  EXPECT_EQ(sign_errors, 0u);
  EXPECT_LE(worst, 1u);
}

TEST(SecureRelu, ExtremeValuesHaveNoFailureBand) {
  // The exact sign test also holds at the edges of the signed range.
  RingTensor x({8});
  const Elem vals[8] = {0, 1, kCfg.sign_bit() - 1, kCfg.sign_bit(), kCfg.sign_bit() + 1,
                        ~Elem{0}, Elem{1} << 62, (Elem{3} << 62)};
  for (int i = 0; i < 8; ++i) x[i] = vals[i];
  Deal d(kCfg, 62);
  deal::relu(d.writer, 8);
  auto [x0, x1] = share_of(x, 14);
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return secure_relu(c, c.party ? x1.tensor : x0.tensor);
  });
  const RingTensor b = reconstruct(r0.sign, r1.sign, kCfg);
  const int want[8] = {1, 1, 1, 0, 0, 0, 1, 0};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(b[i], static_cast<Elem>(want[i])) << i;
}

TEST(SecureRelu, ZeroInput) {
  Deal d(kCfg, 63);
  deal::relu(d.writer, 4);
  auto [x0, x1] = share_of(RingTensor({4}), 15);
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return secure_relu(c, c.party ? x1.tensor : x0.tensor);
  });
  EXPECT_EQ(reconstruct(r0.y, r1.y, kCfg), RingTensor({4}));
  EXPECT_EQ(reconstruct(r0.sign, r1.sign, kCfg), RingTensor({4}, 1));
}

TEST(SecureRelu, ConsumedMaterialCannotBeReplayed) {
  Deal d(kCfg, 64);
  deal::relu(d.writer, 4);
  auto [x0, x1] = share_of(RingTensor({4}), 16);
  run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    return secure_relu(c, c.party ? x1.tensor : x0.tensor);
  });
  MaterialReader r(d.t0, kCfg);
  EXPECT_THROW(r.sign_mask(4), MaterialError);
}

TEST(SecureRelu, BackwardMatchesPlaintext) {
  const std::size_t n = 2000;
  std::mt19937_64 gen(65);
  const ring::RingArith ar{kCfg};
  const auto x = testing::random_fixed(gen, {n}, 10, kCfg);
  const auto g = testing::random_fixed(gen, {n}, 10, kCfg);
  RingTensor pos = x;
  for (auto& v : pos.values()) v = ring::is_negative(v, kCfg) ? ring::neg(v, kCfg) : v;

  Deal d(kCfg, 65);
  for (int i = 0; i < 2; ++i) {
    deal::relu(d.writer, n);
    deal::relu_backward(d.writer, n);
  }
  deal::relu_backward(d.writer, n);
  auto [x0, x1] = share_of(x, 17);
  auto [p0, p1] = share_of(pos, 18);
  auto [g0, g1] = share_of(g, 19);
  auto [z0, z1] = share_of(RingTensor({n}), 20);
  struct Out {
    RingTensor random, positive, zero;
  };
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    const int j = c.party;
    Out o;
    auto f = secure_relu(c, j ? x1.tensor : x0.tensor);
    o.random = secure_relu_backward(c, j ? g1.tensor : g0.tensor, f.sign);
    auto fp = secure_relu(c, j ? p1.tensor : p0.tensor);
    o.positive = secure_relu_backward(c, j ? g1.tensor : g0.tensor, fp.sign);
    o.zero = secure_relu_backward(c, j ? z1.tensor : z0.tensor, fp.sign);
    return o;
  });
  EXPECT_EQ(reconstruct(r0.random, r1.random, kCfg), ring::relu_backward(ar, g, x));
  EXPECT_EQ(reconstruct(r0.positive, r1.positive, kCfg), g);
  EXPECT_EQ(reconstruct(r0.zero, r1.zero, kCfg), RingTensor({n}));
}

TEST(SecureRelu, MaskedInputIsUniform) {
  // The value opened by the sign test looks uniform whatever the input.
  const std::size_t n = 20000;
  for (double v : {0.0, 5.0}) {
    Deal d(kCfg, 66);
    deal::relu(d.writer, n);
    auto [x0, x1] = share_of(RingTensor({n}, encode_fixed(v, kCfg)), 21);
    Bytes opened;
    bool first = true;
    run_two(
        kCfg, d.t0, d.t1,
        [&](const MpcContext& c) { return secure_relu(c, c.party ? x1.tensor : x0.tensor); },
        [&](net::Direction dir, net::MsgType t, std::span<const std::uint8_t> p) {
          if (dir == net::Direction::kReceived && t == net::MsgType::kOpen && first) {
            opened.assign(p.begin(), p.end());
            first = false;
          }
        });
    EXPECT_GT(testing::byte_uniformity_pvalue(opened), 0.01) << v;
  }
}

TEST(SignFromPublic, KeyCountMismatchThrows) {
  SignKeys k;
  k.domain_bits = 63;
  k.count = 2;
  RingTensor out({3});
  EXPECT_THROW(sign_from_public(0, kCfg, RingTensor({3}).span(), RingTensor({3}).span(), k,
                                out.span()),
               ShapeError);
}

// -- convolution and pooling ---------------------------------------------------------------

TEST(SecureConv, Im2colRoundTripIsAdjoint) {
  // <im2col(x), c> == <x, col2im(c)> over the ring.
  fss::Prng rng(70);
  const RingTensor x = random_tensor({2, 3, 6, 5}, rng, kCfg);
  const RingTensor cols = im2col(x, 3);
  ASSERT_EQ(cols.shape(), (Shape{2 * 4 * 3, 27}));
  const RingTensor c = random_tensor(cols.shape(), rng, kCfg);
  const RingTensor back = col2im(c, x.shape(), 3, kCfg);
  Elem lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) lhs += cols[i] * c[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
  EXPECT_EQ(lhs, rhs);
}

TEST(SecureConv, ForwardAndBackwardMatchPlaintext) {
  const ring::RingArith ar{kCfg};
  std::mt19937_64 gen(71);
  const auto x = testing::random_fixed(gen, {2, 2, 8, 8}, 1.0, kCfg);
  const auto k = testing::random_fixed(gen, {3, 2, 3, 3}, 0.5, kCfg);
  const auto b = testing::random_fixed(gen, {3}, 0.5, kCfg);
  const auto g = testing::random_fixed(gen, {2, 3, 6, 6}, 1.0, kCfg);
  Deal d(kCfg, 71);
  const std::size_t rows = 2 * 36, ckk = 18;
  deal::conv2d(d.writer, rows, ckk, 3);
  deal::conv2d_backward(d.writer, rows, ckk, 3, true);
  auto [x0, x1] = share_of(x, 22);
  auto [k0, k1] = share_of(k, 23);
  auto [b0, b1] = share_of(b, 24);
  auto [g0, g1] = share_of(g, 25);
  struct Out {
    RingTensor y;
    ConvShareGrads grads;
  };
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    const int j = c.party;
    ConvCache cache;
    Out o;
    o.y = secure_conv2d(c, j ? x1.tensor : x0.tensor, j ? k1.tensor : k0.tensor,
                        j ? b1.tensor : b0.tensor, &cache);
    o.grads = secure_conv2d_backward(c, cache, j ? k1.tensor : k0.tensor, j ? g1.tensor : g0.tensor, true);
    return o;
  });
  auto close = [&](const RingTensor& got, const RingTensor& want, std::uint64_t tol) {
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE(ulp_distance(got[i], want[i], kCfg), tol) << i;
  };
  close(reconstruct(r0.y, r1.y, kCfg), ring::conv2d(ar, x, k, b), 2);
  const auto want = ring::conv2d_backward(ar, x, k, g, true);
  close(reconstruct(r0.grads.kernels, r1.grads.kernels, kCfg), want.kernels, 2);
  close(reconstruct(r0.grads.bias, r1.grads.bias, kCfg), want.bias, 0);
  close(reconstruct(r0.grads.input, r1.grads.input, kCfg), want.input, 2);
}

TEST(SecurePool, ForwardAndBackwardMatchPlaintext) {
  const ring::RingArith ar{kCfg};
  std::mt19937_64 gen(72);
  auto x = testing::random_fixed(gen, {2, 3, 6, 4}, 5.0, kCfg);
  // force ties in a few windows
  x[0] = x[1];
  x[8] = x[9] = x[12] = x[13];
  const auto g = testing::random_fixed(gen, {2, 3, 3, 2}, 5.0, kCfg);
  const std::size_t windows = g.size();
  Deal d(kCfg, 72);
  deal::maxpool2(d.writer, windows);
  deal::maxpool2_backward(d.writer, windows);
  auto [x0, x1] = share_of(x, 26);
  auto [g0, g1] = share_of(g, 27);
  struct Out {
    RingTensor y, gin;
  };
  auto [r0, r1] = run_two(kCfg, d.t0, d.t1, [&](const MpcContext& c) {
    const int j = c.party;
    PoolCache cache;
    Out o;
    o.y = secure_maxpool2(c, j ? x1.tensor : x0.tensor, &cache);
    o.gin = secure_maxpool2_backward(c, cache, j ? g1.tensor : g0.tensor);
    return o;
  });
  const auto want = ring::maxpool2(ar, x);
  EXPECT_EQ(reconstruct(r0.y, r1.y, kCfg), want.output);
  EXPECT_EQ(reconstruct(r0.gin, r1.gin, kCfg),
            ring::maxpool2_backward(g, want.argmax, x.shape(), Elem{0}));
}

}  // namespace
}  // namespace splitfss::mpc
