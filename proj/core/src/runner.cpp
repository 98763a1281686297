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
#include "gmmuda/runner.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "gmmuda/error.hpp"
#include "gmmuda/objectives.hpp"
#include "gmmuda/simulator.hpp"

namespace gmmuda::run {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kAugmentStream = 7;

bool is_numerical(ErrorCode code) {
  return code == ErrorCode::NonFiniteGradient || code == ErrorCode::NonFiniteInput ||
         code == ErrorCode::NotPositiveDefinite;
}

nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Io, p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

double pooled_std(const linalg::Matrix& x) {
  const auto v = x.flat();
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double a : v) var += (a - mean) * (a - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

linalg::Matrix augment(const linalg::Matrix& x, double relative_sigma, std::mt19937_64& rng) {
  linalg::Matrix out = x;
  const double sigma = relative_sigma * pooled_std(x);
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.flat()) v += noise(rng);
  return out;
}

bool uses_contrastive(LossMode m) { return m == LossMode::Both || m == LossMode::ContrastiveOnly; }
bool uses_kld(LossMode m) { return m == LossMode::Both || m == LossMode::KldOnly; }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

SourceModel prepare_source_model(const RunConfig& cfg) {
  cfg.validate();
  const sim::Task task = sim::make_task(cfg.task.shift(), cfg.task.domain(), cfg.task_sizes(), cfg.seed);
  SourceModel out;
  if (!cfg.source_model.empty()) {
    out.model = model::ToyModel::from_json(read_json_file(cfg.source_model));
    if (out.model.dims() != cfg.model_dims()) {
      throw Error(ErrorCode::InvalidConfig, "source model dimensions do not match the config");
    }
  } else {
    out.model = model::ToyModel(cfg.model_dims(), sim::derive_seed(cfg.seed, 3));
    model::SourceTrainingConfig tc;
    tc.epochs = cfg.source_epochs;
    tc.batch_size = cfg.source_batch;
    tc.optimizer = {cfg.source_lr, cfg.momentum};
    tc.shuffle_seed = sim::derive_seed(cfg.seed, 4);
    out.epoch_losses = model::train_source(out.model, task.source_train, tc);
  }
  out.holdout_accuracy = model::accuracy(out.model, task.source_holdout);
  return out;
}

AdaptResult run_adapt(const RunConfig& cfg) { return run_adapt(cfg, prepare_source_model(cfg)); }

AdaptResult run_adapt(const RunConfig& cfg, const SourceModel& source) {
  cfg.validate();
  sim::Task task = sim::make_task(cfg.task.shift(), cfg.task.domain(), cfg.task_sizes(), cfg.seed);
  const std::size_t n_known = task.n_known;

  AdaptResult res;
  // Velocity from source training is not carried into adaptation.
  res.model = model::ToyModel(source.model.dims(), source.model.params());
  res.source_holdout_accuracy = source.holdout_accuracy;
  res.gmm = gmm::GmmState(n_known, cfg.fd_r, cfg.gmm_jitter);
  res.thresholds = ood::ThresholdState(cfg.n_init, cfg.p_reject);

  const model::OptimizerConfig opt{cfg.lr, cfg.momentum};
  const objectives::ContrastiveOptions copts{cfg.temperature, cfg.unknown_positive_pairs};
  std::mt19937_64 aug_rng(sim::derive_seed(cfg.seed, kAugmentStream));

  while (auto batch = task.target.next_batch()) {
    try {
      const std::size_t nb = batch->x.rows();
      std::vector<model::ForwardCache> caches = res.model.forward_batch(batch->x);

      linalg::Matrix feats(nb, cfg.fd_r);
      linalg::Matrix probs(nb, n_known);
      for (std::size_t i = 0; i < nb; ++i) {
        std::copy(caches[i].reduced.begin(), caches[i].reduced.end(), feats.row(i).begin());
        std::copy(caches[i].softmax.begin(), caches[i].softmax.end(), probs.row(i).begin());
      }
      res.gmm.update(feats, probs);

      std::vector<linalg::Vec> posteriors(nb);
      std::vector<double> entropies(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        posteriors[i] = ood::normalize_log_likelihoods(res.gmm.class_log_likelihoods(feats.row(i)));
        entropies[i] = ood::normalized_entropy(posteriors[i]);
      }
      if (!res.thresholds.frozen()) res.thresholds.calibrate(entropies);

      std::vector<ood::PseudoLabel> labels(nb);
      std::vector<std::size_t> predictions(nb);
      std::vector<std::size_t> closed(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        labels[i] = ood::pseudo_label(res.thresholds, posteriors[i]);
        predictions[i] = ood::predict(res.thresholds, caches[i].softmax, posteriors[i]);
        closed[i] = ood::argmax(caches[i].softmax);
      }

      metrics::RunRecord record = metrics::score_batch(*batch, predictions, labels, n_known, closed);
      record.tau_k = res.thresholds.tau_known();
      record.tau_u = res.thresholds.tau_unknown();

      if (cfg.loss_mode != LossMode::None) {
        const linalg::Matrix views = augment(batch->x, cfg.augment_sigma, aug_rng);
        std::vector<model::ForwardCache> aug_caches = res.model.forward_batch(views);
        caches.insert(caches.end(), std::make_move_iterator(aug_caches.begin()),
                      std::make_move_iterator(aug_caches.end()));

        objectives::LossResult lc;
        objectives::LossResult lk;
        if (uses_contrastive(cfg.loss_mode)) {
          linalg::Matrix reduced(2 * nb, cfg.fd_r);
          std::vector<ood::PseudoLabel> pair_labels(2 * nb);
          for (std::size_t i = 0; i < 2 * nb; ++i) {
            std::copy(caches[i].reduced.begin(), caches[i].reduced.end(), reduced.row(i).begin());
            pair_labels[i] = labels[i % nb];
          }
          const auto prototypes = res.gmm.means();
          lc = objectives::contrastive_loss(reduced, pair_labels, prototypes, copts);
        }
        if (uses_kld(cfg.loss_mode)) lk = objectives::kld_loss(probs, labels);

        const auto combined = objectives::combined_loss(lc, lk, cfg.lambda);
        record.loss_c = combined.contrastive;
        record.loss_kld = combined.kld;

        std::vector<model::OutputGrad> up(2 * nb);
        for (std::size_t i = 0; i < 2 * nb; ++i) {
          if (lc.n_terms > 0) {
            const auto g = combined.reduced_grads.row(i);
            up[i].d_reduced.assign(g.begin(), g.end());
          }
          if (i < nb && lk.n_terms > 0) {
            const auto g = combined.logit_grads.row(i);
            up[i].d_logits.assign(g.begin(), g.end());
          }
        }
        res.model.sgd_step(res.model.backward(caches, up), opt);
      }
      res.records.push_back(std::move(record));
    } catch (const Error& e) {
      if (is_numerical(e.code())) throw NumericalFailure(e, batch->index);
      throw;
    }
  }

  nlohmann::ordered_json resolved = cfg.to_json();
  nlohmann::ordered_json derived;
  derived["n_known_classes"] = n_known;
  derived["unknown_class_index"] = n_known;
  derived["n_batches_processed"] = res.records.size();
  derived["tau_k"] = res.thresholds.tau_known();
  derived["tau_u"] = res.thresholds.tau_unknown();
  derived["tau"] = res.thresholds.inference_threshold();
  derived["thresholds_frozen"] = res.thresholds.frozen();
  derived["calibration_cutoff_rank"] = res.thresholds.cutoff_rank(cfg.n_b);
  derived["source_holdout_accuracy"] = source.holdout_accuracy;
  derived["gmm_memory_values"] = res.gmm.memory_footprint();
  derived["augment_sigma_rule"] = "augment_sigma * pooled std of batch inputs";
  resolved["derived"] = std::move(derived);
  res.resolved_config = std::move(resolved);
  res.summary = build_summary(res.records, res.resolved_config);
  return res;
}

nlohmann::ordered_json build_summary(const std::vector<metrics::RunRecord>& records,
                                     const nlohmann::json& resolved_config) {
  const auto& derived = resolved_config.at("derived");
  const std::size_t n_init = resolved_config.at("n_init").get<std::size_t>();
  const std::string kind = resolved_config.at("task").at("kind").get<std::string>();
  const bool frozen = records.size() >= n_init;

  nlohmann::ordered_json s;
  s["seed"] = resolved_config.at("seed");
  s["kind"] = kind;
  s["loss_mode"] = resolved_config.at("loss_mode");
  s["n_batches"] = records.size();
  s["thresholds_frozen"] = frozen;
  s["warning"] = frozen ? nlohmann::ordered_json(nullptr)
                        : nlohmann::ordered_json("run ended before thresholds froze (n_batches < n_init)");
  s["tau_k"] = derived.at("tau_k");
  s["tau_u"] = derived.at("tau_u");
  s["tau"] = derived.at("tau");
  s["source_holdout_accuracy"] = derived.at("source_holdout_accuracy");

  const auto full = metrics::summarize_window(records, 0);
  const auto post = metrics::summarize_window(records, n_init);
  s["primary_metric"] = kind == "PDA" ? "accuracy" : "h_score";
  const auto& primary = kind == "PDA" ? full.accuracy : full.h_score;
  s["primary_value"] = primary ? nlohmann::ordered_json(*primary) : nlohmann::ordered_json(nullptr);
  s["full"] = metrics::to_json(full);
  s["post_calibration"] = metrics::to_json(post);
  return s;
}

std::string render_summary(const nlohmann::ordered_json& summary) { return summary.dump(2) + "\n"; }

void write_run_dir(const fs::path& dir, const AdaptResult& result) {
  fs::create_directories(dir);
  write_text(dir / "config.resolved.json", result.resolved_config.dump(2) + "\n");

  std::ostringstream jsonl;
  metrics::write_jsonl(jsonl, result.records);
  write_text(dir / "metrics.jsonl", jsonl.str());

  std::string csv = std::string(metrics::kCsvHeader) + "\n";
  for (const auto& r : result.records) csv += metrics::csv_row(r) + "\n";
  write_text(dir / "metrics.csv", csv);

  std::string thr = "batch,tau_k,tau_u,tau\n";
  for (const auto& r : result.records) {
    thr += std::to_string(r.batch_index) + "," + metrics::format_double(r.tau_k) + "," +
           metrics::format_double(r.tau_u) + "," + metrics::format_double(0.5 * (r.tau_k + r.tau_u)) + "\n";
  }
  write_text(dir / "thresholds.csv", thr);

  write_text(dir / "model.ckpt", result.model.to_json().dump() + "\n");
  write_text(dir / "gmm.ckpt", result.gmm.to_json().dump() + "\n");
  write_text(dir / "summary.json", render_summary(result.summary));
}

ReplayResult replay(const fs::path& dir) {
  const nlohmann::json resolved = read_json_file(dir / "config.resolved.json");
  std::ifstream in(dir / "metrics.jsonl");
  if (!in) throw Error(ErrorCode::Io, "cannot open " + (dir / "metrics.jsonl").string());
  const auto records = metrics::read_jsonl(in);

  ReplayResult out;
  out.summary = build_summary(records, resolved);
  out.rendered = render_summary(out.summary);
  std::ifstream stored(dir / "summary.json", std::ios::binary);
  if (stored) {
    std::ostringstream ss;
    ss << stored.rdbuf();
    out.matches_stored = ss.str() == out.rendered;
  }
  return out;
}

double primary_metric(const nlohmann::json& summary) {
  const auto& v = summary.at("primary_value");
  return v.is_null() ? 0.0 : v.get<double>();
}

std::vector<SweepRow> run_sweep(const RunConfig& base, const SweepOptions& opts) {
  const std::string param = canonical_sweep_parameter(opts.parameter);
  if (opts.values.empty()) throw Error(ErrorCode::InvalidConfig, "sweep needs at least one value");
  if (opts.repeats == 0) throw Error(ErrorCode::InvalidConfig, "repeats must be at least 1");

  struct Job {
    std::size_t row;
    std::size_t repeat;
    RunConfig cfg;
    fs::path dir;
  };

  std::vector<SweepRow> rows;
  std::vector<Job> jobs;
  const auto add_row = [&](const std::string& value, bool compensated) {
    RunConfig cfg = base;
    set_parameter(cfg, param, value);
    if (compensated) {
      const double scaled = static_cast<double>(base.n_init) * static_cast<double>(base.n_b) /
                            static_cast<double>(cfg.n_b);
      cfg.n_init = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scaled)));
    }
    cfg.validate();
    SweepRow row;
    row.parameter = param;
    row.value = value;
    row.compensated = compensated;
    row.n_init = cfg.n_init;
    row.metrics.assign(opts.repeats, 0.0);
    row.adapt_ratios.assign(opts.repeats, 0.0);
    for (std::size_t r = 0; r < opts.repeats; ++r) {
      RunConfig rc = cfg;
      rc.seed = base.seed + r;
      fs::path dir;
      if (!opts.out_dir.empty()) {
        dir = opts.out_dir / "runs" / (param + "=" + value + (compensated ? "_comp" : "")) /
              ("seed_" + std::to_string(rc.seed));
      }
      jobs.push_back({rows.size(), r, rc, dir});
    }
    rows.push_back(std::move(row));
  };
  for (const auto& v : opts.values) {
    add_row(v, false);
    if (opts.compensate && param == "n_b") add_row(v, true);
  }

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  const auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      try {
        const Job& job = jobs[k];
        const AdaptResult res = run_adapt(job.cfg);
        if (!job.dir.empty()) write_run_dir(job.dir, res);
        rows[job.row].metrics[job.repeat] = primary_metric(res.summary);
        const auto& ar = res.summary.at("full").at("adapt_ratio");
        rows[job.row].adapt_ratios[job.repeat] = ar.is_null() ? 0.0 : ar.get<double>();
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(opts.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  for (auto& row : rows) {
    row.mean_metric = mean_of(row.metrics);
    row.std_metric = std_of(row.metrics);
    row.mean_adapt_ratio = mean_of(row.adapt_ratios);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "parameter,value,compensated,n_init,repeats,mean_metric,std_metric,mean_adapt_ratio\n";
  for (const auto& r : rows) {
    out += r.parameter + "," + r.value + "," + (r.compensated ? "true" : "false") + "," + std::to_string(r.n_init) +
           "," + std::to_string(r.metrics.size()) + "," + metrics::format_double(r.mean_metric) + "," +
           metrics::format_double(r.std_metric) + "," + metrics::format_double(r.mean_adapt_ratio) + "\n";
  }
  return out;
}

std::vector<MemoryRow> run_memory(const metrics::MemoryModelInputs& inputs, std::size_t first_class,
                                  std::size_t last_class) {
  if (first_class == 0 || last_class < first_class) {
    throw Error(ErrorCode::InvalidConfig, "class range must be a non-empty span starting at 1 or later");
  }
  std::vector<MemoryRow> rows;
  rows.reserve(last_class - first_class + 1);
  for (std::size_t c = first_class; c <= last_class; ++c) {
    metrics::MemoryModelInputs m = inputs;
    m.n_classes = c;
    rows.push_back({c, metrics::memory_report(m)});
  }
  return rows;
}

std::string memory_csv(const std::vector<MemoryRow>& rows) {
  std::string out = "n_classes,n_gmm,n_queue,n_teacher,ratio_queue,ratio_teacher\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n_classes) + "," + std::to_string(r.report.n_gmm) + "," +
           std::to_string(r.report.n_queue) + "," + std::to_string(r.report.n_teacher) + "," +
           metrics::format_double(r.report.ratio_queue) + "," + metrics::format_double(r.report.ratio_teacher) + "\n";
  }
  return out;
}

}  // namespace gmmuda::run
