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
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmuda/simulator.hpp"
#include "gmmuda/toy_model.hpp"

namespace gmmuda::run {

enum class LossMode { Both, ContrastiveOnly, KldOnly, None };

std::string_view to_string(LossMode mode);
LossMode parse_loss_mode(std::string_view name);

// Synthetic task stanza. The translation vector is derived from translation_norm and
// rotation_seed so the whole task is reproducible from these scalars.
struct TaskConfig {
  sim::ShiftKind kind = sim::ShiftKind::OPDA;
  std::size_t n_shared = 6;
  std::size_t n_source_private = 3;
  std::size_t n_target_private = 3;
  std::size_t d_in = 20;
  double class_sep = 5.0;
  std::uint64_t rotation_seed = 1;
  double rotation_strength = 0.1;
  double translation_norm = 6.0;
  double noise_sigma_source = 1.0;
  double noise_sigma_target = 1.75;
  sim::PrivatePlacement private_placement = sim::PrivatePlacement::Between;
  std::size_t source_per_class = 300;
  std::size_t holdout_per_class = 100;

  sim::ShiftSpec shift() const;
  sim::DomainSpec domain() const;
};

struct RunConfig {
  std::uint64_t seed = 7;
  TaskConfig task;

  std::size_t fd = 256;
  std::size_t fd_r = 64;
  std::size_t n_b = 64;
  double p_reject = 50.0;
  std::size_t n_init = 30;
  double temperature = 0.1;
  double lambda = 1.0;
  double lr = 0.0005;
  double momentum = 0.9;
  std::size_t n_batches = 200;
  LossMode loss_mode = LossMode::Both;
  bool unknown_positive_pairs = false;
  // Augmentation noise std as a multiple of the batch's pooled input std.
  double augment_sigma = 0.1;
  double gmm_jitter = 0.1;

  std::size_t source_epochs = 5;
  double source_lr = 0.05;
  std::size_t source_batch = 64;
  // Optional path to a model checkpoint from train-source; empty means train in-process.
  std::string source_model;

  model::ModelDims model_dims() const;
  sim::TaskSizes task_sizes() const;

  // Throws Error(InvalidConfig / InvalidSplit) describing the first violated constraint.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // Starts from defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
};

// Names of every settable leaf key, in to_json order.
const std::vector<std::string>& parameter_names();

// Sets one leaf key from its textual value, e.g. ("p_reject", "40").
void set_parameter(RunConfig& cfg, std::string_view key, std::string_view value);

// Maps sweep aliases like "FD_r" or "N_init" onto config keys.
std::string canonical_sweep_parameter(std::string_view name);

}  // namespace gmmuda::run
