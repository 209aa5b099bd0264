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

// Metrics records. Every record carries the config hash, the code version and
// the fixed-point configuration. Records are appended to a JSON-lines file;
// per-epoch rows are also appended to a CSV file next to it.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>

#include "splitfss/harness/runner.hpp"

namespace splitfss::harness {

inline json provenance(const ExperimentConfig& c) {
  return {{"config_hash", config_hash(c)},
          {"version", code_version()},
          {"variant", proto::variant_name(c.hp.variant)},
          {"ring_bits", c.hp.fixed.ring_bits},
          {"frac_bits", c.hp.fixed.frac_bits}};
}

inline json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

inline json epoch_record(const ExperimentConfig& c, const proto::EpochMetrics& e) {
  json j = provenance(c);
  j["record"] = "epoch";
  j["epoch"] = e.epoch;
  j["batches"] = e.batches;
  j["test_accuracy"] = number_or_null(e.test_accuracy);
  j["train_seconds"] = e.train_seconds;
  j["test_seconds"] = e.test_seconds;
  j["train_loss"] = number_or_null(e.train_loss);
  return j;
}

inline json meter_record(const ExperimentConfig& c, const net::ByteMeter& m) {
  json j = provenance(c);
  j["record"] = "meter";
  j["meter"] = net::meter_report(m);
  return j;
}

inline json dealer_record(const ExperimentConfig& c, const proto::DealerOutcome& d) {
  json j = provenance(c);
  j["record"] = "preprocessing";
  j["setup_bytes"] = d.setup_bytes;
  j["train_bytes"] = d.train_bytes;
  j["test_bytes"] = d.test_bytes;
  j["train_batches"] = d.train_batches;
  j["bytes_per_batch"] = d.train_bytes_per_batch();
  j["mb_per_batch"] = d.train_bytes_per_batch() / net::kBytesPerMB;
  return j;
}

/// Headline numbers of one run, as in a Table 2 row.
struct RunSummary {
  Variant variant = Variant::kPrivateVanilla;
  double test_accuracy = proto::kNotMeasured;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
  std::uint64_t client_train_bytes = 0;  // sent by the client while training
  std::uint64_t server_train_bytes = 0;  // sent by the servers while training
  std::uint64_t client_test_bytes = 0;
  double preprocessing_per_batch = 0.0;  // dealer bytes per training batch
  std::uint64_t setup_bytes = 0;
  std::size_t train_batches = 0;
};

inline RunSummary summarize(const ExperimentConfig& c, const RunResult& r) {
  RunSummary s;
  s.variant = c.hp.variant;
  if (r.client) {
    for (const auto& e : r.client->epochs) {
      s.train_seconds += e.train_seconds;
      s.test_seconds += e.test_seconds;
      s.train_batches += e.batches;
      if (!std::isnan(e.test_accuracy)) s.test_accuracy = e.test_accuracy;
    }
  }
  using net::Direction;
  using net::Phase;
  auto sent = [&](Party p, Phase ph) -> std::uint64_t {
    auto it = r.meters.find(p);
    return it == r.meters.end() ? 0 : it->second->total(Direction::kSent, ph);
  };
  s.client_train_bytes = sent(Party::kClient, Phase::kTraining);
  s.client_test_bytes = sent(Party::kClient, Phase::kTesting);
  s.server_train_bytes = sent(Party::kServer0, Phase::kTraining) + sent(Party::kServer1, Phase::kTraining);
  if (r.dealer) {
    s.preprocessing_per_batch = r.dealer->train_bytes_per_batch();
    s.setup_bytes = r.dealer->setup_bytes;
  }
  return s;
}

inline json summary_record(const ExperimentConfig& c, const RunSummary& s) {
  json j = provenance(c);
  j["record"] = "summary";
  j["test_accuracy"] = number_or_null(s.test_accuracy);
  j["train_seconds"] = s.train_seconds;
  j["test_seconds"] = s.test_seconds;
  j["train_batches"] = s.train_batches;
  j["client_train_bytes"] = s.client_train_bytes;
  j["client_train_mb"] = s.client_train_bytes / net::kBytesPerMB;
  j["server_train_bytes"] = s.server_train_bytes;
  j["server_train_mb"] = s.server_train_bytes / net::kBytesPerMB;
  j["client_test_bytes"] = s.client_test_bytes;
  j["preprocessing_bytes_per_batch"] = s.preprocessing_per_batch;
  j["setup_bytes"] = s.setup_bytes;
  return j;
}

/// Appends records to `<output>` (JSON lines) and epoch rows to
/// `<output minus extension>.csv`. An empty path discards everything.
class MetricsSink {
 public:
  explicit MetricsSink(std::string path) : path_(std::move(path)) {
    if (path_.empty()) return;
    const auto dir = std::filesystem::path(path_).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    jsonl_.open(path_, std::ios::app);
    if (!jsonl_) throw ConfigError("cannot append to metrics file " + path_);
    const auto csv_path = std::filesystem::path(path_).replace_extension(".csv");
    const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
    csv_.open(csv_path, std::ios::app);
    if (fresh) {
      csv_ << "config_hash,version,variant,ring_bits,frac_bits,epoch,batches,test_accuracy,"
              "train_seconds,test_seconds,train_loss\n";
    }
  }

  void write(const json& record) {
    if (path_.empty()) return;
    std::lock_guard lock(mu_);
    jsonl_ << record.dump() << '\n';
    jsonl_.flush();
    if (record.value("record", "") == "epoch") {
      auto num = [](const json& v) { return v.is_null() ? std::string() : v.dump(); };
      csv_ << record["config_hash"].get<std::string>() << ',' << record["version"].get<std::string>() << ','
           << record["variant"].get<std::string>() << ',' << record["ring_bits"] << ',' << record["frac_bits"]
           << ',' << record["epoch"] << ',' << record["batches"] << ',' << num(record["test_accuracy"]) << ','
           << record["train_seconds"] << ',' << record["test_seconds"] << ',' << num(record["train_loss"])
           << '\n';
      csv_.flush();
    }
  }

 private:
  std::string path_;
  std::ofstream jsonl_, csv_;
  std::mutex mu_;
};

/// Every record of a run: epochs, one meter per party present, the dealer
/// and (for local-sim) the summary.
inline void write_run(MetricsSink& sink, const ExperimentConfig& c, const RunResult& r, bool with_summary) {
  if (r.client) {
    for (const auto& e : r.client->epochs) sink.write(epoch_record(c, e));
  }
  for (const auto& [p, m] : r.meters) sink.write(meter_record(c, *m));
  if (r.dealer) sink.write(dealer_record(c, *r.dealer));
  if (with_summary) sink.write(summary_record(c, summarize(c, r)));
}

}  // namespace splitfss::harness
