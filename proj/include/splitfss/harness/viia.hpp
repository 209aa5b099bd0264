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

// Visual invertibility analysis: how much of the raw image shows through
// what leaves the client. Compares each raw image with the plaintext conv1
// output, the split-layer activation map, the masked x_pub and an additive
// image share, by Pearson correlation and by PGM image dumps.
//
// Correlation statistic: for every channel, Pearson's rho over all (image,
// pixel) pairs between the activation and the raw image resampled to the
// channel's size (centre crop when the sizes are close, block average when
// the map is much smaller); reported as the mean |rho| over channels. The
// per-image variant (one rho per image and channel) is reported alongside.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "splitfss/harness/metrics.hpp"
#include "splitfss/harness/stats.hpp"

namespace splitfss::harness {

using ring::ClientParams;
using ring::RingTensor;
using Elem = ring::RingTensor::value_type;

struct ViiaReport {
  std::size_t images = 0;
  json pooled;     // mean |rho| per view, pooled over images
  json per_image;  // mean |rho| per view, one rho per image and channel
  std::vector<std::string> files;

  double pooled_rho(const std::string& view) const { return pooled.at(view).get<double>(); }
};

namespace detail {

/// Raw image [28,28] (values in [0,1]) resampled to side x side.
inline std::vector<double> resample(const double* img, std::size_t in, std::size_t side) {
  std::vector<double> out(side * side);
  if (2 * side > in) {
    const std::size_t off = (in - side) / 2;
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) out[y * side + x] = img[(y + off) * in + x + off];
    return out;
  }
  const std::size_t block = in / side, off = (in - block * side) / 2;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      double s = 0;
      for (std::size_t dy = 0; dy < block; ++dy)
        for (std::size_t dx = 0; dx < block; ++dx) s += img[(off + y * block + dy) * in + off + x * block + dx];
      out[y * side + x] = s / static_cast<double>(block * block);
    }
  return out;
}

struct View {
  std::string name;
  ring::Tensor<double> maps;  // [N, C, side, side]
};

struct Rho {
  double pooled;
  double per_image;
};

inline Rho correlate(const ring::Tensor<double>& raw, const ring::Tensor<double>& maps) {
  const std::size_t n = maps.dim(0), c = maps.dim(1), side = maps.dim(2), in = raw.dim(2);
  const std::size_t px = side * side;
  std::vector<std::vector<double>> resampled(n);
  for (std::size_t i = 0; i < n; ++i) resampled[i] = resample(raw.data() + i * in * in, in, side);
  double pooled = 0.0, single = 0.0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<double> a, b;
    a.reserve(n * px);
    b.reserve(n * px);
    for (std::size_t i = 0; i < n; ++i) {
      const double* m = maps.data() + (i * c + ch) * px;
      a.insert(a.end(), m, m + px);
      b.insert(b.end(), resampled[i].begin(), resampled[i].end());
      single += std::fabs(pearson(std::span(m, px), resampled[i]));
    }
    pooled += std::fabs(pearson(a, b));
  }
  return {pooled / static_cast<double>(c), single / static_cast<double>(c * n)};
}

/// Writes channel maps as one grayscale montage, linearly rescaled to 0..255.
inline void write_montage(const std::filesystem::path& path, const double* maps, std::size_t channels,
                          std::size_t side) {
  const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(channels))));
  const std::size_t rows = (channels + cols - 1) / cols;
  const std::size_t scale = side >= 24 ? 1 : (24 + side - 1) / side;
  const std::size_t cell = side * scale + 1;
  const std::size_t w = cols * cell + 1, h = rows * cell + 1;
  double lo = maps[0], hi = maps[0];
  for (std::size_t i = 0; i < channels * side * side; ++i) {
    lo = std::min(lo, maps[i]);
    hi = std::max(hi, maps[i]);
  }
  std::vector<std::uint8_t> px(w * h, 255);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const std::size_t oy = (ch / cols) * cell + 1, ox = (ch % cols) * cell + 1;
    for (std::size_t y = 0; y < side * scale; ++y)
      for (std::size_t x = 0; x < side * scale; ++x) {
        const double v = maps[ch * side * side + (y / scale) * side + x / scale];
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        px[(oy + y) * w + ox + x] = static_cast<std::uint8_t>(std::lround(255.0 * t));
      }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "P5\n" << w << ' ' << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

}  // namespace detail

inline constexpr std::uint64_t kViiaMaskStream = 0x56494941;  // "VIIA"

/// Analyses the first `opts.images` test images under the given client model.
inline ViiaReport run_viia(const ViiaOptions& opts, const Hyperparams& hp, const ClientParams<Elem>& params,
                           const data::Dataset& images) {
  const auto& cfg = hp.fixed;
  const ring::RingArith ar{cfg};
  const std::size_t n = std::min(opts.images, images.count);
  if (n == 0) throw ConfigError("viia: no images");
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  const data::Batch batch = data::make_batch(images, idx);
  const RingTensor x = ring::encode_tensor(batch.x, cfg);
  const auto cache = ring::client_forward(ar, params, x);

  fss::Prng rng(hp.seed, kViiaMaskStream);
  const RingTensor mask = opts.zero_mask ? RingTensor(cache.atm.shape()) : mpc::random_tensor(cache.atm.shape(), rng, cfg);
  const RingTensor x_pub = mpc::add(cache.atm, mask, cfg);
  const RingTensor image_share = mpc::share(x, rng, cfg).first.tensor;

  const std::vector<detail::View> views = {
      {"conv1_plain", ring::decode_tensor(cache.conv1_out, cfg)},
      {"split_plain", ring::decode_tensor(cache.atm, cfg)},
      {"split_masked", ring::decode_tensor(x_pub, cfg)},
      {"image_share", ring::decode_tensor(image_share, cfg)},
  };
  ViiaReport rep;
  rep.images = n;
  for (const auto& v : views) {
    const auto rho = detail::correlate(batch.x, v.maps);
    rep.pooled[v.name] = rho.pooled;
    rep.per_image[v.name] = rho.per_image;
  }

  const std::size_t dumps = std::min(opts.dump_images, n);
  if (dumps) std::filesystem::create_directories(opts.out_dir);
  for (std::size_t i = 0; i < dumps; ++i) {
    const std::string stem = "img" + std::to_string(i) + "_";
    const auto raw = std::filesystem::path(opts.out_dir) / (stem + "raw.pgm");
    detail::write_montage(raw, batch.x.data() + i * 28 * 28, 1, 28);
    rep.files.push_back(raw.string());
    for (const auto& v : views) {
      if (v.name == "image_share") continue;
      const std::size_t c = v.maps.dim(1), side = v.maps.dim(2);
      const auto p = std::filesystem::path(opts.out_dir) / (stem + v.name + ".pgm");
      detail::write_montage(p, v.maps.data() + i * c * side * side, c, side);
      rep.files.push_back(p.string());
    }
  }
  return rep;
}

/// Client model for the analysis: the seeded initialization, optionally
/// trained for `opts.train_batches` public-vanilla batches first.
inline ClientParams<Elem> viia_model(const ExperimentConfig& c, Datasets data) {
  if (c.viia.train_batches == 0) {
    return ring::encode_params(ring::init_model(c.hp.arch, c.hp.seed).client, c.hp.fixed);
  }
  ExperimentConfig t = c;
  t.hp.variant = Variant::kPublicVanilla;
  t.hp.max_batches = c.viia.train_batches;
  t.hp.epochs = 1;
  t.hp.test_samples = std::min<std::size_t>(c.hp.batch, c.hp.test_samples);
  return run_local_sim(t, data).client->params;
}

inline json viia_record(const ExperimentConfig& c, const ViiaReport& r) {
  json j = provenance(c);
  j["record"] = "viia";
  j["images"] = r.images;
  j["zero_mask"] = c.viia.zero_mask;
  j["train_batches"] = c.viia.train_batches;
  j["mean_abs_rho"] = r.pooled;
  j["mean_abs_rho_per_image"] = r.per_image;
  j["files"] = r.files;
  return j;
}

}  // namespace splitfss::harness
