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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "splitfss/harness/experiment.hpp"
#include "splitfss/harness/metrics.hpp"
#include "splitfss/harness/runner.hpp"
#include "splitfss/harness/selftest.hpp"
#include "splitfss/harness/table2.hpp"
#include "splitfss/harness/viia.hpp"
#include "test_util.hpp"

namespace splitfss::harness {
namespace {

using proto::Variant;

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("splitfss_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// -- configuration ---------------------------------------------------------------------

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.hp.variant = Variant::kPrivateLocal;
  c.hp.seed = 77;
  c.endpoints.server1 = "10.0.0.2:9000";
  c.viia.zero_mask = true;
  c.table2.variants = {Variant::kPublicVanilla};
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
}

TEST(Config, OverridesReachNestedFields) {
  const auto c = load_config("", {"variant=public-local", "viia.images=7", "endpoints.dealer=1.2.3.4:5",
                                  "arch.final_relu=true", "lr=0.01"});
  EXPECT_EQ(c.hp.variant, Variant::kPublicLocal);
  EXPECT_EQ(c.viia.images, 7u);
  EXPECT_EQ(c.endpoints.dealer, "1.2.3.4:5");
  EXPECT_TRUE(c.hp.arch.final_relu);
  EXPECT_DOUBLE_EQ(c.hp.lr, 0.01);
}

TEST(Config, StringFieldKeepsNumericLookingText) {
  EXPECT_EQ(load_config("", {"output=2024"}).output, "2024");
  EXPECT_EQ(load_config("", {"data_dir="}).data_dir, "");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(load_config("", {"no_such=1"}), ConfigError);
  EXPECT_THROW(load_config("", {"viia.nope=1"}), ConfigError);
  EXPECT_THROW(load_config("", {"novalue"}), ConfigError);
  EXPECT_THROW(load_config("", {"batch=\"many\""}), ConfigError);
  EXPECT_THROW(load_config("", {"variant=sideways"}), ConfigError);
  EXPECT_THROW(load_config("", {"batch=0"}), ConfigError);
  EXPECT_THROW(load_config("", {"lr=0.000001"}), ConfigError);  // lr / batch below one unit
}

TEST(Config, FileThenOverrides) {
  const auto dir = scratch("config");
  const auto path = (dir / "c.json").string();
  std::ofstream(path) << R"({"seed": 9, "batch": 64, "viia": {"images": 3}})";
  const auto c = load_config(path, {"seed=10"});
  EXPECT_EQ(c.hp.seed, 10u);
  EXPECT_EQ(c.hp.batch, 64u);
  EXPECT_EQ(c.viia.images, 3u);
  EXPECT_EQ(c.viia.dump_images, ExperimentConfig{}.viia.dump_images);

  std::ofstream(path) << R"({"seed": 9, "typo": 1})";
  EXPECT_THROW(load_config(path), ConfigError);
  std::ofstream(path) << "[1, 2]";
  EXPECT_THROW(load_config(path), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(Config, HashTracksEveryField) {
  const ExperimentConfig a;
  ExperimentConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.hp.seed += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.viia.images += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, FullScaleGuard) {
  ExperimentConfig c;
  c.hp.max_batches = 0;
  c.hp.epochs = 10;
  EXPECT_THROW(check_scale(c), ConfigError);
  c.full_scale = true;
  EXPECT_NO_THROW(check_scale(c));
  c.full_scale = false;
  c.hp.variant = Variant::kPublicVanilla;
  EXPECT_NO_THROW(check_scale(c));  // public runs only warn
  EXPECT_NO_THROW(check_scale(ExperimentConfig{}));
}

// -- topology --------------------------------------------------------------------------

TEST(Topology, PartiesAndEdgesPerVariant) {
  EXPECT_EQ(participants(Variant::kPublicVanilla).size(), 2u);
  EXPECT_EQ(topology(Variant::kPublicLocal).size(), 1u);
  EXPECT_EQ(participants(Variant::kPrivateVanilla).size(), 4u);
  EXPECT_EQ(topology(Variant::kPrivateVanilla).size(), 6u);  // incl. dealer to client for masks
  EXPECT_EQ(topology(Variant::kPrivateLocal).size(), 5u);
  EXPECT_EQ(topology(Variant::kPrivateVanilla, false).size(), 3u);  // tapes: no dealer links
  EXPECT_EQ(tape_path("t", net::Party::kServer1).filename(), "server1.tape");
}

// -- metrics ---------------------------------------------------------------------------

TEST(Metrics, RecordsCarryProvenanceAndAppend) {
  const auto dir = scratch("metrics");
  ExperimentConfig c;
  c.output = (dir / "sub" / "m.jsonl").string();
  proto::EpochMetrics e;
  e.epoch = 0;
  e.batches = 5;
  e.test_accuracy = 0.5;
  for (int round = 0; round < 2; ++round) {
    MetricsSink sink(c.output);
    sink.write(epoch_record(c, e));
    net::ByteMeter m(net::Party::kClient);
    sink.write(meter_record(c, m));
  }
  std::istringstream lines(slurp(c.output));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["config_hash"], config_hash(c));
    EXPECT_EQ(j["ring_bits"], 64);
    EXPECT_EQ(j["frac_bits"], 16);
    EXPECT_TRUE(j.contains("version"));
    ++n;
  }
  EXPECT_EQ(n, 4);
  const std::string csv = slurp(dir / "sub" / "m.csv");
  EXPECT_EQ(csv.rfind("config_hash,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);  // one header, two epoch rows
  std::filesystem::remove_all(dir);
}

TEST(Metrics, MissingAccuracyIsNull) {
  proto::EpochMetrics e;
  EXPECT_TRUE(epoch_record(ExperimentConfig{}, e)["test_accuracy"].is_null());
}

RunSummary row(Variant v, double acc, std::uint64_t client, double prep, double seconds) {
  RunSummary r;
  r.variant = v;
  r.test_accuracy = acc;
  r.client_train_bytes = client;
  r.preprocessing_per_batch = prep;
  r.train_seconds = seconds;
  return r;
}

TEST(Table2, RatiosFromRows) {
  Table2Report t;
  t.rows = {row(Variant::kPublicLocal, 0.99, 300, 0, 1), row(Variant::kPublicVanilla, 0.98, 100, 0, 2),
            row(Variant::kPrivateLocal, 0.96, 290, 880, 70), row(Variant::kPrivateVanilla, 0.97, 100, 10, 10)};
  const auto r = table2_ratios(t);
  EXPECT_DOUBLE_EQ(r["client_comm_private_local_over_vanilla"].get<double>(), 2.9);
  EXPECT_DOUBLE_EQ(r["client_comm_public_local_over_vanilla"].get<double>(), 3.0);
  EXPECT_DOUBLE_EQ(r["preprocessing_local_over_vanilla"].get<double>(), 88.0);
  EXPECT_DOUBLE_EQ(r["train_time_private_local_over_vanilla"].get<double>(), 7.0);
  EXPECT_DOUBLE_EQ(r["train_time_private_over_public_vanilla"].get<double>(), 5.0);
  EXPECT_NEAR(r["accuracy_gap_public_minus_private_vanilla"].get<double>(), 0.01, 1e-12);
  t.ratios = r;
  const std::string text = format_table2(t);
  for (const char* v : {"public-local", "public-vanilla", "private-local", "private-vanilla"}) {
    EXPECT_NE(text.find(v), std::string::npos);
  }
  const std::string csv = table2_csv(t);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Table2, MissingVariantGivesNull) {
  Table2Report t;
  t.rows = {row(Variant::kPublicVanilla, 0.98, 100, 0, 2)};
  const auto r = table2_ratios(t);
  EXPECT_TRUE(r["client_comm_private_local_over_vanilla"].is_null());
  EXPECT_TRUE(r["accuracy_gap_public_minus_private_vanilla"].is_null());
}

TEST(Table2, SmallRunOrdersTheVariants) {
  const auto train = testing::synthetic_dataset(256, 1), test = testing::synthetic_dataset(32, 2, data::Split::kTest);
  ExperimentConfig c;
  c.hp.batch = 8;
  c.hp.max_batches = 2;
  c.hp.train_samples = 256;
  c.hp.test_samples = 16;
  const auto t = run_table2(c, {&train, &test});
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_GE(t.ratios["client_comm_private_local_over_vanilla"].get<double>(), 2.0);
  EXPECT_GE(t.ratios["preprocessing_local_over_vanilla"].get<double>(), 10.0);
  EXPECT_GE(t.ratios["client_comm_public_local_over_vanilla"].get<double>(), 2.5);
  EXPECT_EQ(t.row(Variant::kPublicLocal)->preprocessing_per_batch, 0.0);
}

// -- visual leakage analysis -----------------------------------------------------------

TEST(Viia, ResampleCropsOrAverages) {
  std::vector<double> img(28 * 28);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  const auto crop = detail::resample(img.data(), 28, 24);
  EXPECT_EQ(crop[0], 2 * 28 + 2);
  const auto avg = detail::resample(img.data(), 28, 4);  // 7x7 blocks
  EXPECT_DOUBLE_EQ(avg[0], 3 * 28 + 3);
}

TEST(Viia, ZeroMaskShowsThePlainMap) {
  const auto ds = testing::synthetic_dataset(20, 3, data::Split::kTest);
  const auto dir = scratch("viia");
  ViiaOptions o;
  o.images = 20;
  o.dump_images = 2;
  proto::Hyperparams hp;
  const auto params = ring::encode_params(ring::init_model(hp.arch, 1).client, hp.fixed);
  o.out_dir = (dir / "plain").string();
  o.zero_mask = true;
  const auto plain = run_viia(o, hp, params, ds);
  EXPECT_DOUBLE_EQ(plain.pooled_rho("split_masked"), plain.pooled_rho("split_plain"));
  EXPECT_EQ(slurp(dir / "plain" / "img0_split_masked.pgm"), slurp(dir / "plain" / "img0_split_plain.pgm"));

  o.out_dir = (dir / "masked").string();
  o.zero_mask = false;
  const auto masked = run_viia(o, hp, params, ds);
  EXPECT_NE(slurp(dir / "masked" / "img0_split_masked.pgm"), slurp(dir / "masked" / "img0_split_plain.pgm"));
  EXPECT_GT(masked.pooled_rho("conv1_plain"), 0.3);
  EXPECT_LT(masked.pooled_rho("split_masked"), 0.1);
  EXPECT_EQ(masked.files.size(), 2u * 4u);

  const std::string pgm = slurp(dir / "masked" / "img1_conv1_plain.pgm");
  EXPECT_EQ(pgm.rfind("P5\n", 0), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Viia, CorrelationOfAnImageWithItselfIsOne) {
  ring::Tensor<double> raw({3, 1, 28, 28});
  std::mt19937_64 gen(4);
  for (auto& v : raw.values()) v = static_cast<double>(gen() % 256) / 255.0;
  const auto r = detail::correlate(raw, raw);
  EXPECT_NEAR(r.pooled, 1.0, 1e-12);
  EXPECT_NEAR(r.per_image, 1.0, 1e-12);
}

// -- self-test -------------------------------------------------------------------------

TEST(Selftest, DefaultSuitesPassAndMutationFails) {
  SelftestOptions o;
  o.exhaustive_bits = {4, 6};
  o.samples = 500;
  const auto good = run_selftest(o);
  EXPECT_TRUE(good.pass()) << format_selftest(good);
  EXPECT_EQ(good.suites.size(), 2u + 2u + 3u);
  o.mutate = true;
  const auto bad = run_selftest(o);
  EXPECT_FALSE(bad.pass());
  for (const auto& s : bad.suites) {
    if (s.name.rfind("fss exhaustive", 0) == 0 || s.name.rfind("fss sampled", 0) == 0) EXPECT_FALSE(s.pass) << s.name;
  }
}

TEST(Selftest, ExhaustiveDomainIsBounded) {
  EXPECT_THROW(selftest::exhaustive(13, false), ConfigError);
}

TEST(Selftest, EmptyReportDoesNotPass) {
  EXPECT_FALSE(SelftestReport{}.pass());
}

}  // namespace
}  // namespace splitfss::harness
