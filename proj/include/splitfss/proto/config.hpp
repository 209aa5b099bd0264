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

// Hyperparameters agreed by all parties before training. The digest is the
// FNV-1a hash of their canonical JSON form and is what the session
// handshake compares.

#include <cmath>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "splitfss/common/error.hpp"
#include "splitfss/ring/model.hpp"

namespace splitfss::proto {

enum class Variant { kPublicLocal, kPublicVanilla, kPrivateLocal, kPrivateVanilla };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kPublicLocal: return "public-local";
    case Variant::kPublicVanilla: return "public-vanilla";
    case Variant::kPrivateLocal: return "private-local";
    case Variant::kPrivateVanilla: return "private-vanilla";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::kPublicLocal, Variant::kPublicVanilla, Variant::kPrivateLocal,
                 Variant::kPrivateVanilla}) {
    if (s == variant_name(v)) return v;
  }
  throw ConfigError("unknown variant '" + s +
                    "' (public-local, public-vanilla, private-local, private-vanilla)");
}

/// Secret-shared variants need the second server and the dealer.
inline bool is_private(Variant v) { return v == Variant::kPrivateLocal || v == Variant::kPrivateVanilla; }
/// Split variants keep the convolutional layers on the client.
inline bool is_split(Variant v) { return v == Variant::kPublicVanilla || v == Variant::kPrivateVanilla; }

struct Hyperparams {
  Variant variant = Variant::kPrivateVanilla;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t batch = 128;
  /// Batches per epoch; 0 means every full batch of the training set.
  std::size_t max_batches = 0;
  std::size_t epochs = 1;
  /// Training and test set sizes; the dealer plans material from these.
  std::size_t train_samples = 60000;
  std::size_t test_samples = 10000;
  /// Evaluate on the test set after every epoch (otherwise only at the end).
  bool eval_every_epoch = true;
  /// Reveal the training loss to the client each batch (private variants).
  bool log_loss = false;
  std::uint64_t seed = 1;
  ring::FixedPointConfig fixed{64, 16};
  ring::ModelArchitecture arch;

  std::size_t batches_per_epoch() const {
    const std::size_t full = train_samples / batch;
    return max_batches ? std::min(max_batches, full) : full;
  }

  void validate() const {
    fixed.validate();
    arch.validate();
    if (batch == 0) throw ConfigError("batch must be positive");
    if (train_samples < batch) throw ConfigError("train_samples smaller than one batch");
    if (!(lr > 0.0) || momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("need lr > 0 and 0 <= momentum < 1");
    }
    if (lr / static_cast<double>(batch) * std::ldexp(1.0, fixed.frac_bits) < 1.0) {
      throw ConfigError("lr / batch is below one fixed-point unit");
    }
    if (fixed.ring_bits < 32 && is_private(variant)) {
      throw ConfigError("training needs ring_bits >= 32");
    }
  }
};

inline nlohmann::json to_json(const ring::ModelArchitecture& a) {
  auto conv = [](const ring::ConvSpec& c) {
    return nlohmann::json{{"in", c.in_channels}, {"out", c.out_channels}, {"kernel", c.kernel}};
  };
  return {{"input_size", a.input_size}, {"conv1", conv(a.conv1)}, {"conv2", conv(a.conv2)},
          {"hidden", a.hidden}, {"classes", a.classes}, {"final_relu", a.final_relu}};
}

inline nlohmann::json to_json(const Hyperparams& h) {
  return {{"variant", variant_name(h.variant)},
          {"lr", h.lr},
          {"momentum", h.momentum},
          {"batch", h.batch},
          {"max_batches", h.max_batches},
          {"epochs", h.epochs},
          {"train_samples", h.train_samples},
          {"test_samples", h.test_samples},
          {"eval_every_epoch", h.eval_every_epoch},
          {"log_loss", h.log_loss},
          {"seed", h.seed},
          {"ring_bits", h.fixed.ring_bits},
          {"frac_bits", h.fixed.frac_bits},
          {"arch", to_json(h.arch)}};
}

inline ring::ModelArchitecture arch_from_json(const nlohmann::json& j) {
  ring::ModelArchitecture a;
  auto conv = [](const nlohmann::json& c) {
    return ring::ConvSpec{c.at("in").get<std::size_t>(), c.at("out").get<std::size_t>(),
                          c.at("kernel").get<std::size_t>()};
  };
  a.input_size = j.at("input_size").get<std::size_t>();
  a.conv1 = conv(j.at("conv1"));
  a.conv2 = conv(j.at("conv2"));
  a.hidden = j.at("hidden").get<std::size_t>();
  a.classes = j.at("classes").get<std::size_t>();
  a.final_relu = j.at("final_relu").get<bool>();
  return a;
}

/// Inverse of to_json; every field must be present.
inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  try {
    Hyperparams h;
    h.variant = parse_variant(j.at("variant").get<std::string>());
    h.lr = j.at("lr").get<double>();
    h.momentum = j.at("momentum").get<double>();
    h.batch = j.at("batch").get<std::size_t>();
    h.max_batches = j.at("max_batches").get<std::size_t>();
    h.epochs = j.at("epochs").get<std::size_t>();
    h.train_samples = j.at("train_samples").get<std::size_t>();
    h.test_samples = j.at("test_samples").get<std::size_t>();
    h.eval_every_epoch = j.at("eval_every_epoch").get<bool>();
    h.log_loss = j.at("log_loss").get<bool>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.fixed.ring_bits = j.at("ring_bits").get<int>();
    h.fixed.frac_bits = j.at("frac_bits").get<int>();
    h.arch = arch_from_json(j.at("arch"));
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hyperparameters: ") + e.what());
  }
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Digest of the canonical (sorted-key, compact) JSON encoding.
inline std::uint64_t digest(const Hyperparams& h) { return fnv1a64(to_json(h).dump()); }

}  // namespace splitfss::proto
