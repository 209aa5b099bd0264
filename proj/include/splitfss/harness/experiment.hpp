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

// Experiment configuration: hyperparameters plus everything a run needs that
// the parties do not hash (endpoints, paths, analysis options). Loaded from a
// JSON file and adjusted with dotted key=value overrides.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "splitfss/common/error.hpp"
#include "splitfss/proto/config.hpp"

namespace splitfss::harness {

using nlohmann::json;
using proto::Hyperparams;
using proto::Variant;

struct Endpoints {
  std::string client = "127.0.0.1:7300";
  std::string server0 = "127.0.0.1:7301";
  std::string server1 = "127.0.0.1:7302";
  std::string dealer = "127.0.0.1:7303";
};

struct ViiaOptions {
  std::size_t images = 100;      // images in the correlation statistics
  std::size_t dump_images = 4;   // images written as PGM montages
  std::size_t train_batches = 0; // public-vanilla batches to train the client model first
  bool zero_mask = false;        // test mode: x_pub equals the activation map
  std::string out_dir = "viia";
};

struct SelftestOptions {
  std::vector<int> exhaustive_bits{8};
  std::vector<int> sampled_bits{32, 64};
  std::size_t samples = 10000;
  bool mutate = false;  // corrupt one correction word; the suite must then fail
};

struct Table2Options {
  std::vector<Variant> variants{Variant::kPublicLocal, Variant::kPublicVanilla,
                                Variant::kPrivateLocal, Variant::kPrivateVanilla};
  std::string csv;  // optional CSV copy of the table
};

struct ExperimentConfig {
  Hyperparams hp = desk_defaults();
  Endpoints endpoints;
  std::string data_dir;   // empty: $SPLITFSS_DATA_DIR, then data/mnist
  std::string output;     // JSON-lines metrics file; empty: none
  std::string tape_dir;   // private variants: dealer writes tapes here, others read them
  bool full_scale = false;
  double connect_timeout_s = 60.0;  // deadline for dialling and for awaiting each peer
  ViiaOptions viia;
  SelftestOptions selftest;
  Table2Options table2;

  static Hyperparams desk_defaults() {
    Hyperparams h;
    h.max_batches = 100;
    h.epochs = 1;
    return h;
  }
};

// -- JSON --------------------------------------------------------------------------------

inline json to_json(const ExperimentConfig& c) {
  json j = proto::to_json(c.hp);
  j["endpoints"] = {{"client", c.endpoints.client},
                    {"server0", c.endpoints.server0},
                    {"server1", c.endpoints.server1},
                    {"dealer", c.endpoints.dealer}};
  j["data_dir"] = c.data_dir;
  j["output"] = c.output;
  j["tape_dir"] = c.tape_dir;
  j["full_scale"] = c.full_scale;
  j["connect_timeout_s"] = c.connect_timeout_s;
  j["viia"] = {{"images", c.viia.images},
               {"dump_images", c.viia.dump_images},
               {"train_batches", c.viia.train_batches},
               {"zero_mask", c.viia.zero_mask},
               {"out_dir", c.viia.out_dir}};
  j["selftest"] = {{"exhaustive_bits", c.selftest.exhaustive_bits},
                   {"sampled_bits", c.selftest.sampled_bits},
                   {"samples", c.selftest.samples},
                   {"mutate", c.selftest.mutate}};
  json variants = json::array();
  for (auto v : c.table2.variants) variants.push_back(proto::variant_name(v));
  j["table2"] = {{"variants", variants}, {"csv", c.table2.csv}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.hp = proto::hyperparams_from_json(j);
  try {
    const auto& e = j.at("endpoints");
    c.endpoints = {e.at("client").get<std::string>(), e.at("server0").get<std::string>(),
                   e.at("server1").get<std::string>(), e.at("dealer").get<std::string>()};
    c.data_dir = j.at("data_dir").get<std::string>();
    c.output = j.at("output").get<std::string>();
    c.tape_dir = j.at("tape_dir").get<std::string>();
    c.full_scale = j.at("full_scale").get<bool>();
    c.connect_timeout_s = j.at("connect_timeout_s").get<double>();
    const auto& v = j.at("viia");
    c.viia = {v.at("images").get<std::size_t>(), v.at("dump_images").get<std::size_t>(),
              v.at("train_batches").get<std::size_t>(), v.at("zero_mask").get<bool>(),
              v.at("out_dir").get<std::string>()};
    const auto& s = j.at("selftest");
    c.selftest = {s.at("exhaustive_bits").get<std::vector<int>>(),
                  s.at("sampled_bits").get<std::vector<int>>(), s.at("samples").get<std::size_t>(),
                  s.at("mutate").get<bool>()};
    c.table2.variants.clear();
    for (const auto& name : j.at("table2").at("variants")) {
      c.table2.variants.push_back(proto::parse_variant(name.get<std::string>()));
    }
    c.table2.csv = j.at("table2").at("csv").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

namespace detail {

/// Copies `src` into `dst`, rejecting keys `dst` does not have. Objects
/// merge recursively; everything else replaces.
inline void merge_known(json& dst, const json& src, const std::string& where) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!dst.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    json& d = dst[it.key()];
    if (d.is_object() && it->is_object()) {
      merge_known(d, *it, key);
    } else {
      d = *it;
    }
  }
}

/// The value text as JSON when it parses, otherwise as a string.
inline json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

}  // namespace detail

/// Applies one `a.b.c=value` override to a config document.
inline void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' is not key=value");
  const std::string key = kv.substr(0, eq);
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw ConfigError("override: unknown key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = detail::parse_value(kv.substr(eq + 1));
  // a bare word for a string field stays a string even if it parses as a number
  if (node->is_string() && !value.is_string()) value = kv.substr(eq + 1);
  *node = std::move(value);
}

/// Defaults, then the file (if any), then the overrides in order.
inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  json doc = to_json(ExperimentConfig{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config " + path + ": top level must be an object");
    detail::merge_known(doc, file, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig c = config_from_json(doc);
  c.hp.validate();
  return c;
}

/// Hash of the whole configuration, embedded in every metrics record.
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(proto::fnv1a64(to_json(c).dump())));
  return buf;
}

inline const char* code_version() {
#ifdef SPLITFSS_VERSION
  return SPLITFSS_VERSION;
#else
  return "unknown";
#endif
}

/// Total training batches above which a run counts as full scale.
inline constexpr std::size_t kDeskBatchLimit = 1000;

/// Refuses long private runs unless full_scale is set; warns on stderr for
/// any run at full epoch length.
inline void check_scale(const ExperimentConfig& c) {
  const auto& h = c.hp;
  const std::size_t total = h.batches_per_epoch() * h.epochs;
  if (proto::is_private(h.variant) && total > kDeskBatchLimit && !c.full_scale) {
    throw ConfigError(std::to_string(total) + " private training batches requested; set full_scale=true " +
                      "to confirm a full run (hours for private-vanilla, about a day for private-local)");
  }
  if (h.max_batches == 0 || total > kDeskBatchLimit) {
    std::fprintf(stderr, "warning: full-scale run (%zu batches of %zu, %zu epochs); this takes long\n",
                 h.batches_per_epoch(), h.batch, h.epochs);
  }
}

}  // namespace splitfss::harness
