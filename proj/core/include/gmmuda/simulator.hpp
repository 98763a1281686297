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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmmuda/linalg.hpp"
#include "gmmuda/toy_model.hpp"

namespace gmmuda::sim {

using linalg::Matrix;
using linalg::Vec;
using model::LabeledSet;

enum class ShiftKind { PDA, ODA, OPDA };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view name);

// Category shift: class counts for shared, source-private and target-private classes.
// Classes are numbered shared first, then source-private, then target-private.
struct ShiftSpec {
  ShiftKind kind = ShiftKind::OPDA;
  std::size_t n_shared = 6;
  std::size_t n_source_private = 3;
  std::size_t n_target_private = 3;

  void validate() const;
  std::size_t n_source_classes() const noexcept { return n_shared + n_source_private; }
  std::size_t n_total() const noexcept { return n_shared + n_source_private + n_target_private; }
  // Global class indices present in the target domain.
  std::vector<std::size_t> target_classes() const;
};

// Where target-private class centers go: independent random directions, or the
// midpoint of two distinct source classes (ambiguous for the source classifier).
enum class PrivatePlacement { Random, Between };

std::string_view to_string(PrivatePlacement p);
PrivatePlacement parse_private_placement(std::string_view name);

struct DomainSpec {
  std::size_t d_in = 20;
  double class_sep = 5.0;
  std::uint64_t rotation_seed = 1;
  double rotation_strength = 0.1;
  Vec shift_translation;  // empty means no translation
  double noise_sigma_source = 1.0;
  double noise_sigma_target = 1.75;
  PrivatePlacement private_placement = PrivatePlacement::Between;

  void validate() const;
};

struct TaskSizes {
  std::size_t source_per_class = 300;
  std::size_t holdout_per_class = 100;
  std::size_t n_batches = 200;
  std::size_t batch_size = 64;
};

struct StreamBatch {
  std::size_t index = 0;
  Matrix x;
  // Known classes keep their source index; target-private samples carry the unknown marker.
  std::vector<std::size_t> true_labels;
};

/// Sequential, single-pass iterator over pre-shuffled target samples.
/// A trailing partial batch is never emitted.
class TargetStream {
 public:
  TargetStream() = default;
  TargetStream(Matrix x, std::vector<std::size_t> labels, std::size_t batch_size, std::size_t unknown_marker);

  std::optional<StreamBatch> next_batch();
  void reset() noexcept { cursor_ = 0; }

  std::size_t n_batches() const noexcept { return batch_size_ == 0 ? 0 : x_.rows() / batch_size_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t unknown_marker() const noexcept { return unknown_marker_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }

 private:
  Matrix x_;
  std::vector<std::size_t> labels_;
  std::size_t batch_size_ = 0;
  std::size_t unknown_marker_ = 0;
  std::size_t cursor_ = 0;
};

struct Task {
  LabeledSet source_train;
  LabeledSet source_holdout;
  TargetStream target;
  std::size_t n_known = 0;
  Matrix centers;   // n_total x d_in, source-domain blob centers
  Matrix rotation;  // d_in x d_in
};

/// Builds source train/holdout sets and the shifted target stream.
/// Target sample of class c: R center_c + translation + N(0, sigma_t^2 I).
Task make_task(const ShiftSpec& shift, const DomainSpec& dom, const TaskSizes& sizes, std::uint64_t seed);

// Orthogonal matrix from Gram-Schmidt on I + strength * G, G standard normal. det > 0.
Matrix random_rotation(std::size_t dim, double strength, std::uint64_t seed);

Vec random_translation(std::size_t dim, double norm, std::uint64_t seed);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace gmmuda::sim
