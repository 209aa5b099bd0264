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

// MNIST in IDX format (optionally gzip-compressed): parsing, validation,
// seeded batching and fixed-point encoding.
//
// IDX: [u32 BE magic][u32 BE dim]... then unsigned bytes, row-major.
// Images use magic 0x00000803 with dims [count, 28, 28]; labels use
// 0x00000801 with dims [count].

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "splitfss/common/bytes.hpp"
#include "splitfss/common/error.hpp"
#include "splitfss/ring/tensor.hpp"

namespace splitfss::data {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;
inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kClasses = 10;
/// Environment variable naming the dataset directory.
inline constexpr const char* kDataDirEnv = "SPLITFSS_DATA_DIR";

struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

inline bool is_gzip(std::span<const std::uint8_t> b) {
  return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline Bytes gunzip(std::span<const std::uint8_t> in) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gzip: inflateInit failed");
  Bytes out;
  std::array<std::uint8_t, 1 << 16> buf;
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = buf.size();
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError(std::string("gzip: corrupt stream (") + (zs.msg ? zs.msg : "?") + ")");
    }
    out.insert(out.end(), buf.begin(), buf.begin() + (buf.size() - zs.avail_out));
    if (rc != Z_STREAM_END && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("gzip: truncated stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

/// Parses an IDX buffer; gzip input is inflated first.
inline IdxArray parse_idx(std::span<const std::uint8_t> raw) {
  Bytes inflated;
  if (is_gzip(raw)) {
    inflated = gunzip(raw);
    raw = inflated;
  }
  auto be32 = [&](std::size_t off) {
    return (std::uint32_t{raw[off]} << 24) | (std::uint32_t{raw[off + 1]} << 16) |
           (std::uint32_t{raw[off + 2]} << 8) | std::uint32_t{raw[off + 3]};
  };
  if (raw.size() < 4) throw FormatError("idx: truncated header");
  IdxArray a;
  a.magic = be32(0);
  if (a.magic != kImageMagic && a.magic != kLabelMagic) {
    throw FormatError("idx: bad magic 0x" + [&] {
      char s[9];
      std::snprintf(s, sizeof s, "%08x", a.magic);
      return std::string(s);
    }());
  }
  const std::size_t ndim = a.magic & 0xff;
  if (raw.size() < 4 + 4 * ndim) throw FormatError("idx: truncated dimension list");
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    a.dims.push_back(be32(4 + 4 * i));
    count *= a.dims.back();
  }
  const std::size_t off = 4 + 4 * ndim;
  if (raw.size() - off != count) {
    throw FormatError("idx: expected " + std::to_string(count) + " data bytes, found " +
                      std::to_string(raw.size() - off));
  }
  a.data.assign(raw.begin() + off, raw.end());
  return a;
}

inline Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

// -- dataset -------------------------------------------------------------------

enum class Split { kTrain, kTest };

struct Dataset {
  Split split = Split::kTrain;
  std::size_t count = 0;
  std::vector<std::uint8_t> images;  // count * 28 * 28
  std::vector<std::uint8_t> labels;  // count, each in 0..9

  const std::uint8_t* image(std::size_t i) const { return images.data() + i * kImageSide * kImageSide; }
};

inline Dataset make_dataset(Split split, const IdxArray& images, const IdxArray& labels) {
  if (images.magic != kImageMagic || images.dims.size() != 3) {
    throw FormatError("idx: image file must have magic 0x00000803 and 3 dimensions");
  }
  if (labels.magic != kLabelMagic || labels.dims.size() != 1) {
    throw FormatError("idx: label file must have magic 0x00000801 and 1 dimension");
  }
  if (images.dims[1] != kImageSide || images.dims[2] != kImageSide) {
    throw FormatError("idx: images must be 28x28");
  }
  if (images.dims[0] != labels.dims[0]) {
    throw FormatError("idx: " + std::to_string(images.dims[0]) + " images but " +
                      std::to_string(labels.dims[0]) + " labels");
  }
  for (auto l : labels.data) {
    if (l >= kClasses) throw FormatError("idx: label " + std::to_string(l) + " outside 0..9");
  }
  return Dataset{split, images.dims[0], images.data, labels.data};
}

struct CanonicalFile {
  const char* name;
  std::uint64_t gz_size;
  std::uint64_t raw_size;
};

inline constexpr CanonicalFile kTrainImages{"train-images-idx3-ubyte", 9912422, 47040016};
inline constexpr CanonicalFile kTrainLabels{"train-labels-idx1-ubyte", 28881, 60008};
inline constexpr CanonicalFile kTestImages{"t10k-images-idx3-ubyte", 1648877, 7840016};
inline constexpr CanonicalFile kTestLabels{"t10k-labels-idx1-ubyte", 4542, 10008};

/// Locates a canonical file (raw or .gz) in dir and checks its size.
inline std::filesystem::path find_canonical(const std::filesystem::path& dir, const CanonicalFile& f,
                                            bool verify_size = true) {
  for (const auto& [suffix, size] : {std::pair{std::string(""), f.raw_size},
                                     std::pair{std::string(".gz"), f.gz_size}}) {
    const auto p = dir / (std::string(f.name) + suffix);
    if (!std::filesystem::exists(p)) continue;
    if (verify_size && std::filesystem::file_size(p) != size) {
      throw FormatError(p.string() + ": size " + std::to_string(std::filesystem::file_size(p)) +
                        " does not match the canonical " + std::to_string(size));
    }
    return p;
  }
  throw ConfigError("MNIST file " + std::string(f.name) + "[.gz] not found in " + dir.string() +
                    " (set " + kDataDirEnv + " or run tools/fetch_mnist.sh)");
}

/// Dataset directory: explicit value, else $SPLITFSS_DATA_DIR, else ./data/mnist.
inline std::filesystem::path resolve_data_dir(const std::string& configured = "") {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  return "data/mnist";
}

inline Dataset load_split(const std::filesystem::path& dir, Split split, bool verify_size = true) {
  const auto& fi = split == Split::kTrain ? kTrainImages : kTestImages;
  const auto& fl = split == Split::kTrain ? kTrainLabels : kTestLabels;
  const IdxArray images = parse_idx(read_file(find_canonical(dir, fi, verify_size)));
  const IdxArray labels = parse_idx(read_file(find_canonical(dir, fl, verify_size)));
  return make_dataset(split, images, labels);
}

// -- batching ------------------------------------------------------------------

/// Sample order of one epoch: a seeded Fisher-Yates shuffle (epoch folded
/// into the seed), cut into full batches; the incomplete tail is dropped.
inline std::vector<std::vector<std::uint32_t>> epoch_batches(std::size_t count, std::size_t batch,
                                                             std::uint64_t seed, std::size_t epoch,
                                                             bool shuffle = true) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::vector<std::uint32_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<std::uint32_t>(i);
  if (shuffle) {
    std::mt19937_64 gen(seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1)));
    for (std::size_t i = count; i > 1; --i) {
      const std::size_t j = gen() % i;
      std::swap(order[i - 1], order[j]);
    }
  }
  std::vector<std::vector<std::uint32_t>> out(count / batch);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].assign(order.begin() + b * batch, order.begin() + (b + 1) * batch);
  }
  return out;
}

/// Unshuffled evaluation batches covering all samples; the last may be short.
inline std::vector<std::vector<std::uint32_t>> eval_batches(std::size_t count, std::size_t batch) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t s = 0; s < count; s += batch) {
    auto& b = out.emplace_back();
    for (std::size_t i = s; i < std::min(count, s + batch); ++i) b.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

/// Batch sizes of an evaluation pass, for material planning.
inline std::vector<std::size_t> eval_batch_sizes(std::size_t count, std::size_t batch) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < count; s += batch) out.push_back(std::min(batch, count - s));
  return out;
}

struct Batch {
  ring::Tensor<double> x;           // [n,1,28,28], pixels / 255
  ring::Tensor<double> y;           // [n,10] one-hot
  std::vector<std::uint8_t> labels;
};

inline Batch make_batch(const Dataset& ds, std::span<const std::uint32_t> idx) {
  const std::size_t n = idx.size(), px = kImageSide * kImageSide;
  Batch b{ring::Tensor<double>({n, 1, kImageSide, kImageSide}), ring::Tensor<double>({n, kClasses}), {}};
  b.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= ds.count) throw ShapeError("batch index out of range");
    const std::uint8_t* img = ds.image(idx[i]);
    for (std::size_t p = 0; p < px; ++p) b.x[i * px + p] = img[p] / 255.0;
    const std::uint8_t l = ds.labels[idx[i]];
    b.y[i * kClasses + l] = 1.0;
    b.labels.push_back(l);
  }
  return b;
}

inline ring::RingTensor one_hot(std::span<const std::uint8_t> labels, const ring::FixedPointConfig& cfg) {
  ring::RingTensor y({labels.size(), kClasses});
  const ring::Elem one = ring::encode_fixed(1.0, cfg);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kClasses) throw ShapeError("label outside 0..9");
    y[i * kClasses + labels[i]] = one;
  }
  return y;
}

}  // namespace splitfss::data
