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

// splitfss: one entry point for every role and analysis.
//
//   splitfss <client|server0|server1|dealer|local-sim|table2|viia|selftest>
//            [--config <path>] [--override key=value ...]
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 protocol failure,
// 3 test failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splitfss/data/mnist.hpp"
#include "splitfss/harness/experiment.hpp"
#include "splitfss/harness/metrics.hpp"
#include "splitfss/harness/runner.hpp"
#include "splitfss/harness/selftest.hpp"
#include "splitfss/harness/table2.hpp"
#include "splitfss/harness/viia.hpp"

namespace {

using namespace splitfss;
using harness::ExperimentConfig;

enum Exit { kOk = 0, kUsage = 1, kProtocol = 2, kTestFailure = 3 };

struct LoadedData {
  std::optional<data::Dataset> train, test;
  harness::Datasets view() const { return {train ? &*train : nullptr, test ? &*test : nullptr}; }
};

LoadedData load_data(const ExperimentConfig& c, bool need_train, bool need_test) {
  LoadedData d;
  const auto dir = data::resolve_data_dir(c.data_dir);
  if (need_train) d.train = data::load_split(dir, data::Split::kTrain);
  if (need_test) d.test = data::load_split(dir, data::Split::kTest);
  return d;
}

void print_summary(const harness::RunSummary& s) {
  std::printf("variant            %s\n", proto::variant_name(s.variant));
  std::printf("test accuracy      %.4f\n", s.test_accuracy);
  std::printf("train batches      %zu\n", s.train_batches);
  std::printf("train time (s)     %.3f\n", s.train_seconds);
  std::printf("test time (s)      %.3f\n", s.test_seconds);
  std::printf("client train (MB)  %.6f\n", s.client_train_bytes / net::kBytesPerMB);
  std::printf("server train (MB)  %.6f\n", s.server_train_bytes / net::kBytesPerMB);
  std::printf("preproc/batch (B)  %.0f\n", s.preprocessing_per_batch);
}

int run_role(const std::string& role, const ExperimentConfig& c) {
  harness::MetricsSink sink(c.output);
  if (role == "local-sim") {
    harness::check_scale(c);
    const auto d = load_data(c, true, true);
    const auto r = harness::run_local_sim(c, d.view());
    harness::write_run(sink, c, r, true);
    print_summary(harness::summarize(c, r));
    return kOk;
  }
  const net::Party self = net::parse_party(role);
  if (self == net::Party::kClient) harness::check_scale(c);
  const bool is_client = self == net::Party::kClient;
  const auto d = load_data(c, is_client, is_client);
  const auto r = harness::run_tcp_role(self, c, d.view());
  harness::write_run(sink, c, r, false);
  if (r.client) {
    for (const auto& e : r.client->epochs) {
      std::printf("epoch %zu: %zu batches, train %.3fs, test accuracy %.4f\n", e.epoch, e.batches,
                  e.train_seconds, e.test_accuracy);
    }
  }
  if (auto it = r.meters.find(self); it != r.meters.end()) {
    std::printf("%s\n", net::meter_report(*it->second).dump(2).c_str());
  }
  return kOk;
}

int run_table2(const ExperimentConfig& c) {
  harness::MetricsSink sink(c.output);
  const auto d = load_data(c, true, true);
  const auto t = harness::run_table2(c, d.view(), &sink);
  std::printf("%s\n%s\n", harness::format_table2(t).c_str(), t.ratios.dump(2).c_str());
  return kOk;
}

int run_viia(const ExperimentConfig& c) {
  harness::MetricsSink sink(c.output);
  const auto d = load_data(c, c.viia.train_batches > 0, true);
  const auto params = harness::viia_model(c, d.view());
  const auto rep = harness::run_viia(c.viia, c.hp, params, *d.test);
  sink.write(harness::viia_record(c, rep));
  std::printf("mean |rho| pooled:    %s\n", rep.pooled.dump().c_str());
  std::printf("mean |rho| per image: %s\n", rep.per_image.dump().c_str());
  std::printf("%zu images written to %s\n", rep.files.size(), c.viia.out_dir.c_str());
  return kOk;
}

int run_selftest(const ExperimentConfig& c) {
  const auto rep = harness::run_selftest(c.selftest);
  std::fputs(harness::format_selftest(rep).c_str(), stdout);
  harness::MetricsSink sink(c.output);
  nlohmann::json j = harness::provenance(c);
  j["record"] = "selftest";
  j["pass"] = rep.pass();
  for (const auto& s : rep.suites) {
    j["suites"].push_back({{"name", s.name}, {"pass", s.pass}, {"detail", s.detail}, {"seconds", s.seconds}});
  }
  sink.write(j);
  std::printf("selftest %s\n", rep.pass() ? "PASSED" : "FAILED");
  return rep.pass() ? kOk : kTestFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SplitFSS: split learning with function secret sharing"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  const std::vector<std::string> commands{"client", "server0", "server1",  "dealer",
                                          "local-sim", "table2", "viia", "selftest"};
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name, "run " + name);
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--override", overrides, "key=value, dotted keys for nested fields (repeatable)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    const ExperimentConfig c = harness::load_config(config_path, overrides);
    if (cmd == "table2") return run_table2(c);
    if (cmd == "viia") return run_viia(c);
    if (cmd == "selftest") return run_selftest(c);
    return run_role(cmd, c);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "splitfss %s: configuration error: %s\n", cmd.c_str(), e.what());
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "splitfss %s: protocol failure: %s\n", cmd.c_str(), e.what());
    return kProtocol;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "splitfss %s: failure: %s\n", cmd.c_str(), e.what());
    return kProtocol;
  }
}
