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
#include "gmmuda/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>

#include "gmmuda/error.hpp"

namespace gmmuda::run {

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); }

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T out{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) {
    bad("cannot parse '" + std::string(text) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  bad("cannot parse '" + std::string(text) + "' as boolean for " + std::string(key));
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename T>
Setter number_setter(T RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.*field = parse_number<T>(k, v); };
}

template <typename T>
Setter task_number_setter(T TaskConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.task.*field = parse_number<T>(k, v); };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"seed", number_setter(&RunConfig::seed)},
      {"kind", [](RunConfig& c, std::string_view, std::string_view v) { c.task.kind = sim::parse_shift_kind(v); }},
      {"n_shared", task_number_setter(&TaskConfig::n_shared)},
      {"n_source_private", task_number_setter(&TaskConfig::n_source_private)},
      {"n_target_private", task_number_setter(&TaskConfig::n_target_private)},
      {"d_in", task_number_setter(&TaskConfig::d_in)},
      {"class_sep", task_number_setter(&TaskConfig::class_sep)},
      {"rotation_seed", task_number_setter(&TaskConfig::rotation_seed)},
      {"rotation_strength", task_number_setter(&TaskConfig::rotation_strength)},
      {"translation_norm", task_number_setter(&TaskConfig::translation_norm)},
      {"noise_sigma_source", task_number_setter(&TaskConfig::noise_sigma_source)},
      {"noise_sigma_target", task_number_setter(&TaskConfig::noise_sigma_target)},
      {"private_placement",
       [](RunConfig& c, std::string_view, std::string_view v) {
         c.task.private_placement = sim::parse_private_placement(v);
       }},
      {"source_per_class", task_number_setter(&TaskConfig::source_per_class)},
      {"holdout_per_class", task_number_setter(&TaskConfig::holdout_per_class)},
      {"fd", number_setter(&RunConfig::fd)},
      {"fd_r", number_setter(&RunConfig::fd_r)},
      {"n_b", number_setter(&RunConfig::n_b)},
      {"p_reject", number_setter(&RunConfig::p_reject)},
      {"n_init", number_setter(&RunConfig::n_init)},
      {"temperature", number_setter(&RunConfig::temperature)},
      {"lambda", number_setter(&RunConfig::lambda)},
      {"lr", number_setter(&RunConfig::lr)},
      {"momentum", number_setter(&RunConfig::momentum)},
      {"n_batches", number_setter(&RunConfig::n_batches)},
      {"loss_mode", [](RunConfig& c, std::string_view, std::string_view v) { c.loss_mode = parse_loss_mode(v); }},
      {"unknown_positive_pairs",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.unknown_positive_pairs = parse_bool(k, v); }},
      {"augment_sigma", number_setter(&RunConfig::augment_sigma)},
      {"gmm_jitter", number_setter(&RunConfig::gmm_jitter)},
      {"source_epochs", number_setter(&RunConfig::source_epochs)},
      {"source_lr", number_setter(&RunConfig::source_lr)},
      {"source_batch", number_setter(&RunConfig::source_batch)},
      {"source_model", [](RunConfig& c, std::string_view, std::string_view v) { c.source_model = std::string(v); }},
  };
  return table;
}

const std::vector<std::string> kTaskKeys = {"kind",          "n_shared",           "n_source_private",
                                            "n_target_private", "d_in",            "class_sep",
                                            "rotation_seed", "rotation_strength",  "translation_norm",
                                            "noise_sigma_source", "noise_sigma_target", "private_placement", "source_per_class",
                                            "holdout_per_class"};

std::string json_scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v.get<double>());
    return std::string(buf, res.ptr);
  }
  bad("config values must be scalars, got " + v.dump());
}

}  // namespace

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Both: return "both";
    case LossMode::ContrastiveOnly: return "contrastive_only";
    case LossMode::KldOnly: return "kld_only";
    case LossMode::None: return "none";
  }
  return "?";
}

LossMode parse_loss_mode(std::string_view name) {
  if (name == "both") return LossMode::Both;
  if (name == "contrastive_only") return LossMode::ContrastiveOnly;
  if (name == "kld_only") return LossMode::KldOnly;
  if (name == "none") return LossMode::None;
  bad("unknown loss_mode '" + std::string(name) + "'");
}

sim::ShiftSpec TaskConfig::shift() const { return {kind, n_shared, n_source_private, n_target_private}; }

sim::DomainSpec TaskConfig::domain() const {
  sim::DomainSpec d;
  d.d_in = d_in;
  d.class_sep = class_sep;
  d.rotation_seed = rotation_seed;
  d.rotation_strength = rotation_strength;
  if (translation_norm > 0.0) {
    d.shift_translation = sim::random_translation(d_in, translation_norm, sim::derive_seed(rotation_seed, 1));
  }
  d.noise_sigma_source = noise_sigma_source;
  d.noise_sigma_target = noise_sigma_target;
  d.private_placement = private_placement;
  return d;
}

model::ModelDims RunConfig::model_dims() const { return {task.d_in, fd, fd_r, task.n_shared + task.n_source_private}; }

sim::TaskSizes RunConfig::task_sizes() const {
  return {task.source_per_class, task.holdout_per_class, n_batches, n_b};
}

void RunConfig::validate() const {
  task.shift().validate();
  if (!(task.translation_norm >= 0.0)) bad("translation_norm must be non-negative");
  task.domain().validate();
  if (fd == 0) bad("fd must be positive");
  if (fd_r == 0) bad("fd_r must be positive");
  if (n_b < 4) bad("n_b must be at least 4");
  if (!(p_reject > 0.0 && p_reject < 100.0)) bad("p_reject must lie in (0, 100)");
  if (n_init == 0) bad("n_init must be positive");
  if (!(temperature > 0.0)) bad("temperature must be positive");
  if (!(lambda >= 0.0)) bad("lambda must be non-negative");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must lie in [0, 1)");
  if (n_batches == 0) bad("n_batches must be positive");
  if (!(augment_sigma >= 0.0)) bad("augment_sigma must be non-negative");
  if (!(gmm_jitter >= 0.0)) bad("gmm_jitter must be non-negative");
  if (!(source_lr > 0.0)) bad("source_lr must be positive");
  if (source_batch == 0) bad("source_batch must be positive");
  if (task.source_per_class == 0) bad("source_per_class must be positive");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  nlohmann::ordered_json t;
  t["kind"] = std::string(sim::to_string(task.kind));
  t["n_shared"] = task.n_shared;
  t["n_source_private"] = task.n_source_private;
  t["n_target_private"] = task.n_target_private;
  t["d_in"] = task.d_in;
  t["class_sep"] = task.class_sep;
  t["rotation_seed"] = task.rotation_seed;
  t["rotation_strength"] = task.rotation_strength;
  t["translation_norm"] = task.translation_norm;
  t["noise_sigma_source"] = task.noise_sigma_source;
  t["noise_sigma_target"] = task.noise_sigma_target;
  t["private_placement"] = std::string(sim::to_string(task.private_placement));
  t["source_per_class"] = task.source_per_class;
  t["holdout_per_class"] = task.holdout_per_class;
  j["task"] = std::move(t);
  j["fd"] = fd;
  j["fd_r"] = fd_r;
  j["n_b"] = n_b;
  j["p_reject"] = p_reject;
  j["n_init"] = n_init;
  j["temperature"] = temperature;
  j["lambda"] = lambda;
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["n_batches"] = n_batches;
  j["loss_mode"] = std::string(to_string(loss_mode));
  j["unknown_positive_pairs"] = unknown_positive_pairs;
  j["augment_sigma"] = augment_sigma;
  j["gmm_jitter"] = gmm_jitter;
  j["source_epochs"] = source_epochs;
  j["source_lr"] = source_lr;
  j["source_batch"] = source_batch;
  j["source_model"] = source_model;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "task") {
      if (!value.is_object()) bad("'task' must be an object");
      for (const auto& [tkey, tvalue] : value.items()) {
        if (std::find(kTaskKeys.begin(), kTaskKeys.end(), tkey) == kTaskKeys.end()) {
          bad("unknown task key '" + tkey + "'");
        }
        set_parameter(cfg, tkey, json_scalar_text(tvalue));
      }
      continue;
    }
    if (key == "derived") continue;  // present in resolved echoes
    if (std::find(kTaskKeys.begin(), kTaskKeys.end(), key) != kTaskKeys.end()) {
      bad("task key '" + key + "' belongs inside the 'task' object");
    }
    set_parameter(cfg, key, json_scalar_text(value));
  }
  return cfg;
}

const std::vector<std::string>& parameter_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : setters()) out.push_back(name);
    return out;
  }();
  return names;
}

void set_parameter(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) {
      setter(cfg, key, value);
      return;
    }
  }
  throw Error(ErrorCode::UnknownParameter, "unknown parameter '" + std::string(key) + "'");
}

std::string canonical_sweep_parameter(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(lower.begin(), lower.end(), '-', '_');
  static const std::vector<std::string> allowed = {"fd_r", "p_reject", "n_init", "n_b", "lambda", "temperature", "lr"};
  if (std::find(allowed.begin(), allowed.end(), lower) == allowed.end()) {
    throw Error(ErrorCode::UnknownParameter,
                "cannot sweep '" + std::string(name) + "'; choose one of FD_r, p_reject, N_init, N_b, lambda, "
                "temperature, lr");
  }
  return lower;
}

}  // namespace gmmuda::run
