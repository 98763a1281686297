/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gmmuda/error.hpp"
#include "gmmuda/run_config.hpp"
#include "gmmuda/runner.hpp"

namespace gmmuda::run {
namespace {

namespace fs = std::filesystem;

RunConfig quick_config() {
  RunConfig cfg;
  cfg.n_batches = 12;
  cfg.n_init = 4;
  cfg.task.source_per_class = 60;
  cfg.task.holdout_per_class = 20;
  cfg.source_epochs = 5;
  cfg.fd = 32;
  cfg.fd_r = 8;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmmuda_test_" + name);
  fs::remove_all(p);
  return p;
}

TEST(RunConfigTest, DefaultsAndRoundTrip) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.fd, 256u);
  EXPECT_EQ(cfg.fd_r, 64u);
  EXPECT_EQ(cfg.n_b, 64u);
  EXPECT_EQ(cfg.p_reject, 50.0);
  EXPECT_EQ(cfg.n_init, 30u);
  EXPECT_EQ(cfg.temperature, 0.1);
  EXPECT_EQ(cfg.lambda, 1.0);
  EXPECT_EQ(cfg.momentum, 0.9);
  EXPECT_EQ(cfg.n_batches, 200u);
  EXPECT_EQ(cfg.task.shift().n_total(), 12u);
  const auto j = cfg.to_json();
  EXPECT_EQ(RunConfig::from_json(j).to_json(), j);
}

TEST(RunConfigTest, RejectsUnknownKeysAndBadValues) {
  auto j = RunConfig{}.to_json();
  j["no_such_key"] = 1;
  try {
    RunConfig::from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownParameter);
  }
  RunConfig cfg;
  EXPECT_THROW(set_parameter(cfg, "bogus", "1"), Error);
  EXPECT_THROW(set_parameter(cfg, "p_reject", "abc"), Error);
  cfg.fd_r = 0;
  EXPECT_THROW(cfg.validate(), Error);
  RunConfig one_class;
  one_class.task.kind = sim::ShiftKind::ODA;
  one_class.task.n_shared = 1;
  one_class.task.n_source_private = 0;
  EXPECT_THROW(one_class.validate(), Error);
}

TEST(RunConfigTest, SetParameterAndAliases) {
  RunConfig cfg;
  set_parameter(cfg, "p_reject", "40");
  set_parameter(cfg, "loss_mode", "kld_only");
  set_parameter(cfg, "kind", "ODA");
  EXPECT_EQ(cfg.p_reject, 40.0);
  EXPECT_EQ(cfg.loss_mode, LossMode::KldOnly);
  EXPECT_EQ(cfg.task.kind, sim::ShiftKind::ODA);
  EXPECT_EQ(canonical_sweep_parameter("FD_r"), "fd_r");
  EXPECT_EQ(canonical_sweep_parameter("N_init"), "n_init");
  EXPECT_EQ(canonical_sweep_parameter("N_b"), "n_b");
  for (const auto& name : parameter_names()) EXPECT_FALSE(name.empty());
}

TEST(RunnerTest, NoAdaptationLeavesSourceModel) {
  const RunConfig base = quick_config();
  const SourceModel source = prepare_source_model(base);
  RunConfig cfg = base;
  cfg.loss_mode = LossMode::None;
  const AdaptResult res = run_adapt(cfg, source);
  EXPECT_EQ(res.model.params(), source.model.params());
  for (const auto& r : res.records) {
    EXPECT_EQ(r.loss_c, 0.0);
    EXPECT_EQ(r.loss_kld, 0.0);
  }
}

TEST(RunnerTest, DeterministicRunDirectory) {
  const RunConfig cfg = quick_config();
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  write_run_dir(a, run_adapt(cfg));
  write_run_dir(b, run_adapt(cfg));
  for (const char* f : {"metrics.jsonl", "metrics.csv", "thresholds.csv", "summary.json", "config.resolved.json",
                        "model.ckpt", "gmm.ckpt"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const std::string csv = slurp(a / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), metrics::kCsvHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
}

TEST(RunnerTest, ReplayReproducesSummary) {
  const fs::path dir = scratch("replay");
  const AdaptResult res = run_adapt(quick_config());
  write_run_dir(dir, res);
  const auto rep = replay(dir);
  EXPECT_TRUE(rep.matches_stored);
  EXPECT_EQ(rep.rendered, slurp(dir / "summary.json"));
  // A tampered summary no longer matches.
  std::ofstream(dir / "summary.json") << "{}\n";
  EXPECT_FALSE(replay(dir).matches_stored);
}

TEST(RunnerTest, ThresholdsFreezeAndStayPut) {
  const AdaptResult res = run_adapt(quick_config());
  ASSERT_EQ(res.records.size(), 12u);
  EXPECT_TRUE(res.thresholds.frozen());
  for (std::size_t k = 4; k < res.records.size(); ++k) {
    EXPECT_EQ(res.records[k].tau_k, res.records[3].tau_k);
    EXPECT_EQ(res.records[k].tau_u, res.records[3].tau_u);
  }
  EXPECT_TRUE(res.summary.at("warning").is_null());
  EXPECT_EQ(res.resolved_config.at("derived").at("unknown_class_index"), 9);
}

TEST(RunnerTest, ShortRunWarnsAboutUnfrozenThresholds) {
  RunConfig cfg = quick_config();
  cfg.n_batches = 3;
  const AdaptResult res = run_adapt(cfg);
  EXPECT_EQ(res.records.size(), 3u);
  EXPECT_FALSE(res.thresholds.frozen());
  EXPECT_FALSE(res.summary.at("thresholds_frozen").get<bool>());
  EXPECT_TRUE(res.summary.at("warning").is_string());
}

TEST(SweepTest, SingleValueMatchesAdapt) {
  const RunConfig cfg = quick_config();
  const auto rows = run_sweep(cfg, {"p_reject", {"50"}, 1, false, 1, {}});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].metrics[0], primary_metric(run_adapt(cfg).summary));
}

TEST(SweepTest, BatchSizeCompensation) {
  const RunConfig cfg = quick_config();
  const auto rows = run_sweep(cfg, {"N_b", {"32"}, 2, true, 2, {}});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].compensated);
  EXPECT_EQ(rows[0].n_init, 4u);
  EXPECT_TRUE(rows[1].compensated);
  EXPECT_EQ(rows[1].n_init, 8u);
  EXPECT_EQ(rows[0].metrics.size(), 2u);
  const std::string csv = sweep_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(MemoryTableTest, Rows) {
  const auto rows = run_memory(metrics::MemoryModelInputs{}, 12, 12);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].report.n_gmm, 25740u);
  const auto full = run_memory(metrics::MemoryModelInputs{}, 1, 345);
  EXPECT_EQ(full.size(), 345u);
  EXPECT_NEAR(full.back().report.ratio_queue, 0.0222, 0.0005);
  metrics::MemoryModelInputs bad;
  bad.fd_r = 0;
  EXPECT_THROW(run_memory(bad, 1, 2), Error);
}

TEST(SourceModelTest, DefaultTaskHoldoutAccuracy) {
  const SourceModel source = prepare_source_model(RunConfig{});
  EXPECT_GE(source.holdout_accuracy, 0.9);
}

}  // namespace
}  // namespace gmmuda::run
