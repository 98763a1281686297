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
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmuda/error.hpp"
#include "gmmuda/gmm_stream.hpp"
#include "gmmuda/metrics.hpp"
#include "gmmuda/ood_gate.hpp"
#include "gmmuda/run_config.hpp"
#include "gmmuda/toy_model.hpp"

namespace gmmuda::run {

// Raised when a run aborts on a numerical problem; carries the failing batch.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const Error& cause, std::size_t batch)
      : Error(cause.code(), std::string(cause.what()) + " (batch " + std::to_string(batch) + ")"), batch_(batch) {}
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t batch_;
};

struct SourceModel {
  model::ToyModel model;
  std::vector<double> epoch_losses;
  double holdout_accuracy = 0.0;
};

/// Trains the source classifier on the synthetic task described by cfg, or loads
/// cfg.source_model when set.
SourceModel prepare_source_model(const RunConfig& cfg);

struct AdaptResult {
  std::vector<metrics::RunRecord> records;
  model::ToyModel model;
  gmm::GmmState gmm{2, 1};
  ood::ThresholdState thresholds{1, 50.0};
  double source_holdout_accuracy = 0.0;
  nlohmann::ordered_json resolved_config;
  nlohmann::ordered_json summary;
};

/// One online adaptation pass. Per batch: forward, mixture update, entropies,
/// threshold calibration (first n_init batches), pseudo-labels, predictions,
/// scoring, then (unless loss_mode is none) the losses on the batch plus its
/// augmented copy and one SGD step.
AdaptResult run_adapt(const RunConfig& cfg);
AdaptResult run_adapt(const RunConfig& cfg, const SourceModel& source);

// Summary object derived from the records and the resolved config only.
nlohmann::ordered_json build_summary(const std::vector<metrics::RunRecord>& records,
                                     const nlohmann::json& resolved_config);

/// Writes config.resolved.json, metrics.jsonl, metrics.csv, thresholds.csv,
/// model.ckpt, gmm.ckpt and summary.json into dir (created if missing).
void write_run_dir(const std::filesystem::path& dir, const AdaptResult& result);

struct ReplayResult {
  nlohmann::ordered_json summary;
  std::string rendered;
  bool matches_stored = false;
};

// Re-scores a stored run from its metrics.jsonl and config.resolved.json.
ReplayResult replay(const std::filesystem::path& dir);

std::string render_summary(const nlohmann::ordered_json& summary);

struct SweepOptions {
  std::string parameter;
  std::vector<std::string> values;
  std::size_t repeats = 1;
  // For N_b sweeps: also run with n_init scaled to keep n_init * n_b constant.
  bool compensate = false;
  std::size_t jobs = 1;
  std::filesystem::path out_dir;  // empty: no per-run directories
};

struct SweepRow {
  std::string parameter;
  std::string value;
  bool compensated = false;
  std::size_t n_init = 0;
  std::vector<double> metrics;  // primary metric per repeat
  std::vector<double> adapt_ratios;
  double mean_metric = 0.0;
  double std_metric = 0.0;
  double mean_adapt_ratio = 0.0;
};

std::vector<SweepRow> run_sweep(const RunConfig& base, const SweepOptions& opts);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct MemoryRow {
  std::size_t n_classes = 0;
  metrics::MemoryReport report;
};

std::vector<MemoryRow> run_memory(const metrics::MemoryModelInputs& inputs, std::size_t first_class,
                                  std::size_t last_class);
std::string memory_csv(const std::vector<MemoryRow>& rows);

// Primary summary metric: h_score for ODA/OPDA, accuracy for PDA (full run).
double primary_metric(const nlohmann::json& summary);

}  // namespace gmmuda::run
