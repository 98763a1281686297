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
// gmmuda: source training, online adaptation runs, sweeps, memory tables and replay.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gmmuda/error.hpp"
#include "gmmuda/metrics.hpp"
#include "gmmuda/run_config.hpp"
#include "gmmuda/runner.hpp"

namespace fs = std::filesystem;
using namespace gmmuda;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// Config file plus one --flag per config key (underscores become dashes).
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run config; flags override its keys");
    for (const auto& key : run::parameter_names()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option("--" + flag, overrides[key], "override '" + key + "'");
    }
  }

  run::RunConfig resolve() const {
    run::RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
      }
      cfg = run::RunConfig::from_json(j);
    }
    for (const auto& [key, value] : overrides) {
      if (!value.empty()) run::set_parameter(cfg, key, value);
    }
    cfg.validate();
    return cfg;
  }
};

fs::path default_out(const std::string& leaf) {
  const char* root = std::getenv("GMMUDA_OUT_ROOT");
  return fs::path(root && *root ? root : "runs") / leaf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidSplit:
    case ErrorCode::UnknownParameter:
      return kExitConfig;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteInput:
    case ErrorCode::NotPositiveDefinite:
      return kExitNumerical;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online pseudo-labeling and adaptation with a streaming class-wise Gaussian mixture"};
  app.require_subcommand(1);

  ConfigOptions train_opts, adapt_opts, sweep_opts;
  std::string train_out, adapt_out, sweep_out;

  auto* train = app.add_subcommand("train-source", "Train the source classifier and store model.ckpt");
  train_opts.attach(train);
  train->add_option("--out", train_out, "output directory");

  auto* adapt = app.add_subcommand("adapt", "Run one online adaptation pass and write a run directory");
  adapt_opts.attach(adapt);
  adapt->add_option("--out", adapt_out, "run directory");

  std::string sweep_param, sweep_values;
  std::size_t sweep_repeats = 1, sweep_jobs = 1;
  bool sweep_compensate = false;
  auto* sweep = app.add_subcommand("sweep", "Vary one hyperparameter across values and repeats");
  sweep_opts.attach(sweep);
  sweep->add_option("--param", sweep_param, "FD_r, p_reject, N_init, N_b, lambda, temperature or lr")->required();
  sweep->add_option("--values", sweep_values, "comma separated values")->required();
  sweep->add_option("--repeats", sweep_repeats, "seeds per value (seed, seed+1, ...)");
  sweep->add_flag("--compensate", sweep_compensate, "N_b sweeps: also scale n_init to keep n_init*N_b fixed");
  sweep->add_option("--jobs", sweep_jobs, "parallel runs");
  sweep->add_option("--out", sweep_out, "output directory (sweep.csv and runs/)");

  metrics::MemoryModelInputs mem;
  std::size_t class_min = 1, class_max = 345;
  std::string mem_out;
  auto* memory = app.add_subcommand("memory", "Stored-value comparison: mixture vs queue vs mean teacher");
  memory->add_option("--fd", mem.fd, "feature dimension");
  memory->add_option("--fd-r", mem.fd_r, "reduced feature dimension");
  memory->add_option("--queue-len", mem.queue_len, "memory queue length");
  memory->add_option("--teacher-params", mem.teacher_params, "parameters of the teacher model copy");
  memory->add_option("--class-min", class_min, "first class count in the table");
  memory->add_option("--class-max", class_max, "last class count in the table");
  memory->add_option("--out", mem_out, "CSV file (default: stdout)");

  std::string replay_dir, replay_out;
  auto* replay = app.add_subcommand("replay", "Re-score a stored run from its metric log");
  replay->add_option("--run", replay_dir, "run directory")->required();
  replay->add_option("--out", replay_out, "write the recomputed summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      const auto cfg = train_opts.resolve();
      const fs::path out = train_out.empty() ? default_out("source-seed" + std::to_string(cfg.seed)) : fs::path(train_out);
      const auto src = run::prepare_source_model(cfg);
      fs::create_directories(out);
      write_file(out / "model.ckpt", src.model.to_json().dump() + "\n");
      nlohmann::ordered_json s;
      s["config"] = cfg.to_json();
      s["epoch_losses"] = src.epoch_losses;
      s["holdout_accuracy"] = src.holdout_accuracy;
      write_file(out / "source_summary.json", s.dump(2) + "\n");
      std::cout << "source holdout accuracy " << src.holdout_accuracy << "\n" << (out / "model.ckpt").string() << "\n";
    } else if (*adapt) {
      const auto cfg = adapt_opts.resolve();
      const fs::path out = adapt_out.empty()
                               ? default_out("adapt-" + std::string(run::to_string(cfg.loss_mode)) + "-seed" +
                                             std::to_string(cfg.seed))
                               : fs::path(adapt_out);
      const auto res = run::run_adapt(cfg);
      run::write_run_dir(out, res);
      std::cout << run::render_summary(res.summary) << out.string() << "\n";
    } else if (*sweep) {
      const auto base = sweep_opts.resolve();
      run::SweepOptions so;
      so.parameter = sweep_param;
      so.values = split_list(sweep_values);
      so.repeats = sweep_repeats;
      so.compensate = sweep_compensate;
      so.jobs = sweep_jobs;
      so.out_dir = sweep_out.empty() ? default_out("sweep-" + run::canonical_sweep_parameter(sweep_param)) : fs::path(sweep_out);
      const auto rows = run::run_sweep(base, so);
      const std::string csv = run::sweep_csv(rows);
      write_file(so.out_dir / "sweep.csv", csv);
      std::cout << csv;
    } else if (*memory) {
      const std::string csv = run::memory_csv(run::run_memory(mem, class_min, class_max));
      if (mem_out.empty()) {
        std::cout << csv;
      } else {
        write_file(mem_out, csv);
      }
    } else if (*replay) {
      const auto res = run::replay(replay_dir);
      if (!replay_out.empty()) write_file(replay_out, res.rendered);
      std::cout << res.rendered;
      std::cerr << (res.matches_stored ? "replay matches stored summary.json\n"
                                       : "replay differs from stored summary.json\n");
      return res.matches_stored ? 0 : 1;
    }
  } catch (const run::NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
