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

// Release self-test: FSS correctness oracles (exhaustive and sampled),
// single-key marginal checks, and secure ReLU equivalence. With `mutate`
// every generated key pair has one correction word corrupted, which the
// correctness suites must detect.

#include <chrono>
#include <cstdio>
#include <future>
#include <random>
#include <string>
#include <vector>

#include "splitfss/fss/dcf.hpp"
#include "splitfss/fss/dpf.hpp"
#include "splitfss/harness/experiment.hpp"
#include "splitfss/harness/stats.hpp"
#include "splitfss/mpc/protocol.hpp"

namespace splitfss::harness {

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestReport {
  std::vector<SuiteResult> suites;

  bool pass() const {
    for (const auto& s : suites) {
      if (!s.pass) return false;
    }
    return !suites.empty();
  }
};

namespace selftest {

inline std::uint64_t domain_mask(int bits) {
  return bits == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

template <typename Key>
void corrupt(std::pair<Key, Key>& k) {
  auto& cw0 = k.first.levels[k.first.levels.size() / 2];
  auto& cw1 = k.second.levels[k.second.levels.size() / 2];
  cw0.seed.lo ^= 0x10;
  cw1.seed.lo ^= 0x10;
  cw0.value ^= 1;
  cw1.value ^= 1;
}

template <typename Fn>
SuiteResult timed(std::string name, Fn fn) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r = fn();
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Every (alpha, x) pair of the domain, one random beta per alpha.
inline SuiteResult exhaustive(int bits, bool mutate, std::uint64_t seed = 1) {
  if (bits < 1 || bits > 12) throw ConfigError("exhaustive suites take 1..12 domain bits");
  return timed("fss exhaustive n=" + std::to_string(bits), [&] {
    fss::Prng rng(seed, static_cast<std::uint64_t>(bits));
    std::mt19937_64 gen(seed);
    const std::uint64_t size = std::uint64_t{1} << bits;
    std::uint64_t dpf_bad = 0, dcf_bad = 0;
    for (std::uint64_t alpha = 0; alpha < size; ++alpha) {
      const std::uint64_t beta = gen() | 1;
      auto kp = fss::dpf_keygen(bits, alpha, beta, rng);
      auto kc = fss::dcf_keygen(bits, alpha, beta, rng);
      if (mutate) {
        corrupt(kp);
        corrupt(kc);
      }
      for (std::uint64_t x = 0; x < size; ++x) {
        dpf_bad += fss::dpf_eval(0, kp.first, x) + fss::dpf_eval(1, kp.second, x) != (x == alpha ? beta : 0);
        dcf_bad += fss::dcf_eval(0, kc.first, x) + fss::dcf_eval(1, kc.second, x) != (x <= alpha ? beta : 0);
      }
    }
    return SuiteResult{"", dpf_bad == 0 && dcf_bad == 0,
                       std::to_string(size * size) + " cases each; mismatches dpf " + std::to_string(dpf_bad) +
                           ", dcf " + std::to_string(dcf_bad)};
  });
}

/// Random cases, a quarter of them exactly at alpha and half within a few
/// steps of it.
inline SuiteResult sampled(int bits, std::size_t samples, bool mutate, std::uint64_t seed = 2) {
  return timed("fss sampled n=" + std::to_string(bits), [&] {
    fss::Prng rng(seed, static_cast<std::uint64_t>(bits));
    std::mt19937_64 gen(seed + bits);
    const std::uint64_t mask = domain_mask(bits);
    std::uint64_t dpf_bad = 0, dcf_bad = 0;
    for (std::size_t i = 0; i < samples; ++i) {
      const std::uint64_t alpha = gen() & mask, beta = gen() | 1;
      std::uint64_t x;
      switch (i % 4) {
        case 0: x = alpha; break;
        case 1: x = (alpha + 1 + gen() % 4) & mask; break;
        case 2: x = (alpha - 1 - gen() % 4) & mask; break;
        default: x = gen() & mask; break;
      }
      auto kp = fss::dpf_keygen(bits, alpha, beta, rng);
      auto kc = fss::dcf_keygen(bits, alpha, beta, rng);
      if (mutate) {
        corrupt(kp);
        corrupt(kc);
      }
      dpf_bad += fss::dpf_eval(0, kp.first, x) + fss::dpf_eval(1, kp.second, x) != (x == alpha ? beta : 0);
      dcf_bad += fss::dcf_eval(0, kc.first, x) + fss::dcf_eval(1, kc.second, x) != (x <= alpha ? beta : 0);
    }
    return SuiteResult{"", dpf_bad == 0 && dcf_bad == 0,
                       std::to_string(samples) + " cases; mismatches dpf " + std::to_string(dpf_bad) + ", dcf " +
                           std::to_string(dcf_bad)};
  });
}

/// One party's DCF output at a fixed x, for keys with two thresholds on
/// either side of x: the two samples must look alike (KS) and uniform
/// (byte chi-square).
inline SuiteResult marginal(std::size_t samples, std::uint64_t seed = 3) {
  return timed("fss single-key marginal", [&] {
    const int bits = 32;
    const std::uint64_t x = 1u << 20;
    auto draw = [&](std::uint64_t alpha, std::uint64_t s) {
      fss::Prng rng(s);
      std::vector<std::uint64_t> out(samples);
      for (auto& v : out) v = fss::dcf_eval(0, fss::dcf_keygen(bits, alpha, 1, rng).first, x);
      return out;
    };
    const auto a = draw(5, seed), b = draw(0xfffffff0u, seed + 1);
    std::vector<double> ua, ub;
    for (auto v : a) ua.push_back(to_unit(v));
    for (auto v : b) ub.push_back(to_unit(v));
    const double ks = ks_two_sample(ua, ub).pvalue;
    const double chi = byte_uniformity_pvalue(low_bytes(a));
    char buf[128];
    std::snprintf(buf, sizeof buf, "KS p=%.4f, byte chi-square p=%.4f (%zu samples)", ks, chi, samples);
    return SuiteResult{"", ks > 0.01 && chi > 0.01, buf};
  });
}

/// Runs `fn(ctx)` for both servers over a loopback pair, party 1 on a
/// second thread, and returns both results.
template <typename Fn>
auto run_pair(const ring::FixedPointConfig& cfg, mpc::MemoryTape& t0, mpc::MemoryTape& t1, Fn fn) {
  auto [c0, c1] = net::make_loopback_pair(net::Party::kServer0, std::make_shared<net::ByteMeter>(net::Party::kServer0),
                                          net::Party::kServer1, std::make_shared<net::ByteMeter>(net::Party::kServer1));
  mpc::MaterialReader r0(t0, cfg), r1(t1, cfg);
  const mpc::MpcContext ctx0{0, cfg, c0.get(), &r0}, ctx1{1, cfg, c1.get(), &r1};
  auto f1 = std::async(std::launch::async, [&] { return fn(ctx1); });
  auto v0 = fn(ctx0);
  auto v1 = f1.get();
  return std::make_pair(std::move(v0), std::move(v1));
}

struct ReluCheck {
  std::size_t value_errors = 0;  // outputs beyond the ULP tolerance
  std::size_t sign_errors = 0;
  std::uint64_t worst_ulp = 0;
};

/// Runs secure ReLU on shares of x over loopback and compares with the
/// plaintext ReLU.
inline ReluCheck secure_relu_check(const ring::FixedPointConfig& cfg, const ring::RingTensor& x, std::uint64_t tolerance,
                                   std::uint64_t seed) {
  const std::size_t n = x.size();
  mpc::Dealer dealer(cfg, seed);
  mpc::MemoryTape t0, t1;
  mpc::MaterialWriter w(dealer, t0, t1);
  w.relu(n);
  fss::Prng rng(seed, 17);
  auto [x0, x1] = mpc::share(x, rng, cfg);
  const auto [y0, y1] = run_pair(cfg, t0, t1, [&](const mpc::MpcContext& c) {
    return mpc::secure_relu(c, c.party ? x1.tensor : x0.tensor);
  });
  const ring::RingTensor y = mpc::reconstruct(y0.y, y1.y, cfg);
  const ring::RingTensor b = mpc::reconstruct(y0.sign, y1.sign, cfg);
  const ring::RingArith ar{cfg};
  const ring::RingTensor want = ring::relu(ar, x);
  ReluCheck out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t d = ring::ulp_distance(y[i], want[i], cfg);
    out.worst_ulp = std::max(out.worst_ulp, d);
    out.value_errors += d > tolerance;
    out.sign_errors += b[i] != (ar.nonnegative(x[i]) ? 1u : 0u);
  }
  return out;
}

/// Every element of the 16-bit test ring.
inline SuiteResult relu_small_ring() {
  return timed("secure relu exhaustive l=16", [] {
    const ring::FixedPointConfig cfg{16, 4};
    ring::RingTensor x({std::size_t{1} << 16});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = i;
    const auto r = secure_relu_check(cfg, x, 0, 60);
    return SuiteResult{"", r.value_errors == 0 && r.sign_errors == 0,
                       "65536 inputs; value mismatches " + std::to_string(r.value_errors) + ", sign errors " +
                           std::to_string(r.sign_errors)};
  });
}

/// Random in-range values on the 64-bit ring.
inline SuiteResult relu_full_ring(std::size_t samples, std::uint64_t seed = 61) {
  return timed("secure relu sampled l=64", [&] {
    const ring::FixedPointConfig cfg{64, 16};
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-1e6, 1e6);
    ring::RingTensor x({samples});
    for (auto& v : x.values()) v = ring::encode_fixed(dist(gen), cfg);
    const auto r = secure_relu_check(cfg, x, 1, seed);
    return SuiteResult{"", r.value_errors == 0 && r.sign_errors == 0,
                       std::to_string(samples) + " inputs; sign errors " + std::to_string(r.sign_errors) +
                           ", worst value error " + std::to_string(r.worst_ulp) + " ULP"};
  });
}

}  // namespace selftest

inline SelftestReport run_selftest(const SelftestOptions& o) {
  SelftestReport rep;
  for (int bits : o.exhaustive_bits) rep.suites.push_back(selftest::exhaustive(bits, o.mutate));
  for (int bits : o.sampled_bits) rep.suites.push_back(selftest::sampled(bits, o.samples, o.mutate));
  rep.suites.push_back(selftest::marginal(o.samples));
  rep.suites.push_back(selftest::relu_small_ring());
  rep.suites.push_back(selftest::relu_full_ring(o.samples * 10));
  return rep;
}

inline std::string format_selftest(const SelftestReport& r) {
  std::string out;
  char line[512];
  for (const auto& s : r.suites) {
    std::snprintf(line, sizeof line, "[%s] %-30s %7.2fs  %s\n", s.pass ? "PASS" : "FAIL", s.name.c_str(), s.seconds,
                  s.detail.c_str());
    out += line;
  }
  return out;
}

}  // namespace splitfss::harness
