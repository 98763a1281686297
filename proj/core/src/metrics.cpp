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
#include "gmmuda/metrics.hpp"

#include <charconv>
#include <istream>
#include <ostream>

#include "gmmuda/error.hpp"
#include "gmmuda/gmm_stream.hpp"

namespace gmmuda::metrics {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::ordered_json nullable(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> read_nullable(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string csv_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

double h_score(double acc_known, double acc_unknown) {
  const double s = acc_known + acc_unknown;
  if (s == 0.0) return 0.0;
  return 2.0 * acc_known * acc_unknown / s;
}

void MemoryModelInputs::validate() const {
  if (fd == 0 || fd_r == 0 || n_classes == 0 || queue_len == 0 || teacher_params == 0) {
    throw Error(ErrorCode::InvalidConfig, "memory model inputs must all be positive");
  }
}

MemoryReport memory_report(const MemoryModelInputs& m) {
  m.validate();
  MemoryReport r;
  r.n_gmm = gmm::memory_footprint(m.fd_r, m.n_classes);
  r.n_queue = m.queue_len * (m.fd + m.n_classes);
  r.n_teacher = m.teacher_params;
  r.ratio_queue = static_cast<double>(r.n_gmm) / static_cast<double>(r.n_queue);
  r.ratio_teacher = static_cast<double>(r.n_gmm) / static_cast<double>(r.n_teacher);
  return r;
}

RunRecord score_batch(const sim::StreamBatch& batch, std::span<const std::size_t> predictions,
                      std::span<const ood::PseudoLabel> pseudo_labels, std::size_t n_known,
                      std::span<const std::size_t> closed_predictions) {
  const std::size_t n = batch.true_labels.size();
  if (predictions.size() != n || pseudo_labels.size() != n ||
      (!closed_predictions.empty() && closed_predictions.size() != n)) {
    throw Error(ErrorCode::LengthMismatch, "predictions, pseudo-labels and batch must align");
  }
  RunRecord r;
  r.batch_index = batch.index;
  r.n_samples = n;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t truth = batch.true_labels[i];
    if (truth < n_known) {
      ++r.n_known;
      if (predictions[i] == truth) ++r.n_known_correct;
      if (!closed_predictions.empty() && closed_predictions[i] == truth) ++r.n_closed_correct;
    } else {
      ++r.n_unknown;
      if (predictions[i] == n_known) ++r.n_unknown_correct;
    }
    const auto& pl = pseudo_labels[i];
    if (!pl.is_discarded()) ++r.n_adapted;
    if (pl.is_known()) {
      ++r.n_pseudo_known;
      if (pl.cls == truth) ++r.n_pseudo_known_correct;
    }
  }
  r.acc_known = ratio(r.n_known_correct, r.n_known);
  r.acc_unknown = ratio(r.n_unknown_correct, r.n_unknown);
  if (r.acc_known && r.acc_unknown) r.h_score = h_score(*r.acc_known, *r.acc_unknown);
  r.adapt_ratio = n == 0 ? 0.0 : static_cast<double>(r.n_adapted) / static_cast<double>(n);
  r.pl_precision_known = ratio(r.n_pseudo_known_correct, r.n_pseudo_known);
  if (!closed_predictions.empty()) r.acc_closed = ratio(r.n_closed_correct, r.n_known);
  return r;
}

WindowSummary summarize_window(std::span<const RunRecord> records, std::size_t first_batch) {
  WindowSummary w;
  w.first_batch = first_batch;
  std::size_t known = 0, known_ok = 0, unknown = 0, unknown_ok = 0, adapted = 0, pk = 0, pk_ok = 0, closed_ok = 0;
  bool has_closed = false;
  for (const auto& r : records) {
    if (r.batch_index < first_batch) continue;
    ++w.n_batches;
    w.n_samples += r.n_samples;
    known += r.n_known;
    known_ok += r.n_known_correct;
    unknown += r.n_unknown;
    unknown_ok += r.n_unknown_correct;
    adapted += r.n_adapted;
    pk += r.n_pseudo_known;
    pk_ok += r.n_pseudo_known_correct;
    closed_ok += r.n_closed_correct;
    has_closed = has_closed || r.acc_closed.has_value();
  }
  w.acc_known = ratio(known_ok, known);
  w.acc_unknown = ratio(unknown_ok, unknown);
  if (w.acc_known && w.acc_unknown) w.h_score = h_score(*w.acc_known, *w.acc_unknown);
  w.accuracy = ratio(known_ok + unknown_ok, w.n_samples);
  w.adapt_ratio = ratio(adapted, w.n_samples);
  w.pl_precision_known = ratio(pk_ok, pk);
  if (has_closed) w.acc_closed = ratio(closed_ok, known);
  return w;
}

nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["batch"] = r.batch_index;
  j["acc_known"] = nullable(r.acc_known);
  j["acc_unknown"] = nullable(r.acc_unknown);
  j["h_score"] = nullable(r.h_score);
  j["adapt_ratio"] = r.adapt_ratio;
  j["pl_precision_known"] = nullable(r.pl_precision_known);
  j["tau_k"] = r.tau_k;
  j["tau_u"] = r.tau_u;
  j["loss_c"] = r.loss_c;
  j["loss_kld"] = r.loss_kld;
  j["acc_closed"] = nullable(r.acc_closed);
  j["n_samples"] = r.n_samples;
  j["n_known"] = r.n_known;
  j["n_known_correct"] = r.n_known_correct;
  j["n_unknown"] = r.n_unknown;
  j["n_unknown_correct"] = r.n_unknown_correct;
  j["n_adapted"] = r.n_adapted;
  j["n_pseudo_known"] = r.n_pseudo_known;
  j["n_pseudo_known_correct"] = r.n_pseudo_known_correct;
  j["n_closed_correct"] = r.n_closed_correct;
  return j;
}

RunRecord record_from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.batch_index = j.at("batch").get<std::size_t>();
    r.acc_known = read_nullable(j, "acc_known");
    r.acc_unknown = read_nullable(j, "acc_unknown");
    r.h_score = read_nullable(j, "h_score");
    r.adapt_ratio = j.at("adapt_ratio").get<double>();
    r.pl_precision_known = read_nullable(j, "pl_precision_known");
    r.tau_k = j.at("tau_k").get<double>();
    r.tau_u = j.at("tau_u").get<double>();
    r.loss_c = j.at("loss_c").get<double>();
    r.loss_kld = j.at("loss_kld").get<double>();
    r.acc_closed = read_nullable(j, "acc_closed");
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.n_known = j.at("n_known").get<std::size_t>();
    r.n_known_correct = j.at("n_known_correct").get<std::size_t>();
    r.n_unknown = j.at("n_unknown").get<std::size_t>();
    r.n_unknown_correct = j.at("n_unknown_correct").get<std::size_t>();
    r.n_adapted = j.at("n_adapted").get<std::size_t>();
    r.n_pseudo_known = j.at("n_pseudo_known").get<std::size_t>();
    r.n_pseudo_known_correct = j.at("n_pseudo_known_correct").get<std::size_t>();
    r.n_closed_correct = j.at("n_closed_correct").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed metric record: ") + e.what());
  }
}

nlohmann::ordered_json to_json(const WindowSummary& w) {
  nlohmann::ordered_json j;
  j["first_batch"] = w.first_batch;
  j["n_batches"] = w.n_batches;
  j["n_samples"] = w.n_samples;
  j["acc_known"] = nullable(w.acc_known);
  j["acc_unknown"] = nullable(w.acc_unknown);
  j["h_score"] = nullable(w.h_score);
  j["accuracy"] = nullable(w.accuracy);
  j["adapt_ratio"] = nullable(w.adapt_ratio);
  j["pl_precision_known"] = nullable(w.pl_precision_known);
  j["acc_closed"] = nullable(w.acc_closed);
  return j;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_row(const RunRecord& r) {
  std::string s = std::to_string(r.batch_index);
  for (const std::string& f :
       {csv_field(r.acc_known), csv_field(r.acc_unknown), csv_field(r.h_score), format_double(r.adapt_ratio),
        csv_field(r.pl_precision_known), format_double(r.tau_k), format_double(r.tau_u), format_double(r.loss_c),
        format_double(r.loss_kld)}) {
    s += ',';
    s += f;
  }
  return s;
}

void write_jsonl(std::ostream& os, std::span<const RunRecord> records) {
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

std::vector<RunRecord> read_jsonl(std::istream& is) {
  std::vector<RunRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::Io, std::string("bad JSONL line: ") + e.what());
    }
  }
  return out;
}

}  // namespace gmmuda::metrics
