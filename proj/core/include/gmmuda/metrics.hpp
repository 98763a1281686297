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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmuda/ood_gate.hpp"
#include "gmmuda/simulator.hpp"

namespace gmmuda::metrics {

// Harmonic mean; 0 when both are 0.
double h_score(double acc_known, double acc_unknown);

struct MemoryModelInputs {
  std::size_t fd = 256;
  std::size_t fd_r = 64;
  std::size_t n_classes = 345;
  std::size_t queue_len = 55388;
  std::size_t teacher_params = 24'000'000;

  void validate() const;
};

struct MemoryReport {
  std::size_t n_gmm = 0;
  std::size_t n_queue = 0;
  std::size_t n_teacher = 0;
  double ratio_queue = 0.0;
  double ratio_teacher = 0.0;
};

// Stored-value counts for the mixture, a feature/prediction queue and a model copy.
MemoryReport memory_report(const MemoryModelInputs& m);

/// Per-batch scores. Rates with an empty denominator are nullopt and serialize as null.
struct RunRecord {
  std::size_t batch_index = 0;
  std::size_t n_samples = 0;
  std::size_t n_known = 0;
  std::size_t n_known_correct = 0;
  std::size_t n_unknown = 0;
  std::size_t n_unknown_correct = 0;
  std::size_t n_adapted = 0;
  std::size_t n_pseudo_known = 0;
  std::size_t n_pseudo_known_correct = 0;
  std::size_t n_closed_correct = 0;

  std::optional<double> acc_known;
  std::optional<double> acc_unknown;
  std::optional<double> h_score;
  double adapt_ratio = 0.0;
  std::optional<double> pl_precision_known;
  std::optional<double> acc_closed;  // argmax f(x) on known-class samples, no gate

  double tau_k = 0.0;
  double tau_u = 0.0;
  double loss_c = 0.0;
  double loss_kld = 0.0;

  bool operator==(const RunRecord&) const = default;
};

/// Scores one batch. predictions use n_known as the unknown index; closed_predictions,
/// when given, is argmax of the classifier without the entropy gate.
RunRecord score_batch(const sim::StreamBatch& batch, std::span<const std::size_t> predictions,
                      std::span<const ood::PseudoLabel> pseudo_labels, std::size_t n_known,
                      std::span<const std::size_t> closed_predictions = {});

struct WindowSummary {
  std::size_t first_batch = 0;
  std::size_t n_batches = 0;
  std::size_t n_samples = 0;
  std::optional<double> acc_known;
  std::optional<double> acc_unknown;
  std::optional<double> h_score;
  std::optional<double> accuracy;  // over all samples
  std::optional<double> adapt_ratio;
  std::optional<double> pl_precision_known;
  std::optional<double> acc_closed;
};

// Sample-weighted aggregate of records with batch_index >= first_batch.
WindowSummary summarize_window(std::span<const RunRecord> records, std::size_t first_batch);

nlohmann::ordered_json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const WindowSummary& w);

inline constexpr const char* kCsvHeader =
    "batch,acc_known,acc_unknown,h_score,adapt_ratio,pl_precision_known,tau_k,tau_u,loss_c,loss_kld";

std::string csv_row(const RunRecord& r);

// Shortest round-trip decimal form.
std::string format_double(double v);

void write_jsonl(std::ostream& os, std::span<const RunRecord> records);
std::vector<RunRecord> read_jsonl(std::istream& is);

}  // namespace gmmuda::metrics
