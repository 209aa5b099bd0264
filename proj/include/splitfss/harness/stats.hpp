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

// Statistical checks shared by the self-test, the leakage analysis and the
// test suites.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace splitfss::harness {

/// Upper-tail p-value of Pearson's chi-square statistic for a byte histogram
/// against the uniform distribution on 256 cells.
inline double byte_uniformity_pvalue(std::span<const std::uint8_t> bytes) {
  std::array<double, 256> counts{};
  for (auto b : bytes) counts[b] += 1.0;
  const double expected = static_cast<double>(bytes.size()) / 256.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  return boost::math::gamma_q(255.0 / 2.0, chi2 / 2.0);
}

/// Low byte of every element, as a sample for byte_uniformity_pvalue.
inline std::vector<std::uint8_t> low_bytes(std::span<const std::uint64_t> values) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<std::uint8_t>(values[i]);
  return out;
}

/// All bytes of every element, little-endian.
inline std::vector<std::uint8_t> all_bytes(std::span<const std::uint64_t> values,
                                           int bytes_per_value = 8) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * bytes_per_value);
  for (auto v : values) {
    for (int i = 0; i < bytes_per_value; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  return out;
}

/// Asymptotic Kolmogorov survival function with Stephens' small-sample
/// correction, as used for the two-sample test.
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic;
  double pvalue;
};

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

/// Uniform [0,1) image of a ring element, for KS tests.
inline double to_unit(std::uint64_t v, int ring_bits = 64) {
  return std::ldexp(static_cast<double>(v), -ring_bits);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace splitfss::harness
