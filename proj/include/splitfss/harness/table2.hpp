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

// Runs the four variants at one scale and seed and tabulates accuracy, time,
// communication and dealer material, with the derived ratios.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "splitfss/harness/metrics.hpp"

namespace splitfss::harness {

struct Table2Report {
  std::vector<RunSummary> rows;
  json ratios;

  const RunSummary* row(Variant v) const {
    for (const auto& r : rows) {
      if (r.variant == v) return &r;
    }
    return nullptr;
  }
};

namespace detail {

inline double ratio(double num, double den) { return den > 0 ? num / den : std::nan(""); }

}  // namespace detail

/// Ratios between the variants present in the report (null when a variant
/// is missing).
inline json table2_ratios(const Table2Report& t) {
  const auto* pl = t.row(Variant::kPublicLocal);
  const auto* pv = t.row(Variant::kPublicVanilla);
  const auto* ql = t.row(Variant::kPrivateLocal);
  const auto* qv = t.row(Variant::kPrivateVanilla);
  json j;
  auto put = [&](const char* key, const RunSummary* a, const RunSummary* b, auto field) {
    j[key] = a && b ? number_or_null(detail::ratio(field(*a), field(*b))) : json(nullptr);
  };
  auto client = [](const RunSummary& r) { return static_cast<double>(r.client_train_bytes); };
  auto prep = [](const RunSummary& r) { return r.preprocessing_per_batch; };
  auto time = [](const RunSummary& r) { return r.train_seconds; };
  put("client_comm_private_local_over_vanilla", ql, qv, client);
  put("client_comm_public_local_over_vanilla", pl, pv, client);
  put("preprocessing_local_over_vanilla", ql, qv, prep);
  put("train_time_private_local_over_vanilla", ql, qv, time);
  put("train_time_private_over_public_vanilla", qv, pv, time);
  auto gap = [&](const char* key, const RunSummary* a, const RunSummary* b) {
    j[key] = a && b ? number_or_null(a->test_accuracy - b->test_accuracy) : json(nullptr);
  };
  gap("accuracy_gap_public_minus_private_vanilla", pv, qv);
  gap("accuracy_gap_public_minus_private_local", pl, ql);
  return j;
}

/// Aligned text table for humans.
inline std::string format_table2(const Table2Report& t) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %9s %11s %10s %14s %14s %16s\n", "variant", "accuracy",
                "train_s", "test_s", "client_MB", "server_MB", "prep_MB/batch");
  out << line;
  for (const auto& r : t.rows) {
    std::snprintf(line, sizeof line, "%-16s %8.2f%% %11.2f %10.2f %14.3f %14.3f %16.3f\n",
                  proto::variant_name(r.variant), 100.0 * r.test_accuracy, r.train_seconds, r.test_seconds,
                  r.client_train_bytes / net::kBytesPerMB, r.server_train_bytes / net::kBytesPerMB,
                  r.preprocessing_per_batch / net::kBytesPerMB);
    out << line;
  }
  out << "\n";
  for (auto it = t.ratios.begin(); it != t.ratios.end(); ++it) {
    if (it->is_null()) continue;
    std::snprintf(line, sizeof line, "%-44s %10.3f\n", it.key().c_str(), it->get<double>());
    out << line;
  }
  return out.str();
}

inline std::string table2_csv(const Table2Report& t) {
  std::ostringstream out;
  out << "variant,test_accuracy,train_seconds,test_seconds,client_train_bytes,server_train_bytes,"
         "preprocessing_bytes_per_batch,train_batches\n";
  for (const auto& r : t.rows) {
    out << proto::variant_name(r.variant) << ',' << r.test_accuracy << ',' << r.train_seconds << ','
        << r.test_seconds << ',' << r.client_train_bytes << ',' << r.server_train_bytes << ','
        << r.preprocessing_per_batch << ',' << r.train_batches << '\n';
  }
  return out.str();
}

/// One local-sim run per configured variant, sharing every other setting.
inline Table2Report run_table2(const ExperimentConfig& base, Datasets data, MetricsSink* sink = nullptr) {
  Table2Report t;
  for (auto v : base.table2.variants) {
    ExperimentConfig c = base;
    c.hp.variant = v;
    check_scale(c);
    std::fprintf(stderr, "table2: running %s\n", proto::variant_name(v));
    const RunResult r = run_local_sim(c, data);
    if (sink) write_run(*sink, c, r, true);
    t.rows.push_back(summarize(c, r));
  }
  t.ratios = table2_ratios(t);
  if (sink) {
    json j = provenance(base);
    j["record"] = "table2";
    j["ratios"] = t.ratios;
    sink->write(j);
  }
  if (!base.table2.csv.empty()) {
    std::ofstream f(base.table2.csv);
    if (!f) throw ConfigError("cannot write " + base.table2.csv);
    f << table2_csv(t);
  }
  return t;
}

}  // namespace splitfss::harness
