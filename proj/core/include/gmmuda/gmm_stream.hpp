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
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmuda/linalg.hpp"

namespace gmmuda::gmm {

using linalg::Matrix;
using linalg::Vec;

// One Gaussian mode per known class. weight is the cumulative soft class mass s_k(c).
struct ModeState {
  Vec mean;
  linalg::SymMat cov;
  double weight = 0.0;
  std::optional<linalg::LowerTriangular> chol;

  bool initialized() const noexcept { return weight > 0.0; }
};

/// Streaming class-conditional Gaussian mixture over the known source classes.
///
/// Every update folds one batch of reduced features into the modes, each sample
/// contributing to every mode with its softmax weight. The state is the only thing
/// carried across batches; its size does not depend on how many batches were seen.
class GmmState {
 public:
  GmmState(std::size_t n_classes, std::size_t dim, double jitter = linalg::kDefaultJitter);

  /// Starts from prior knowledge instead of empty modes. Modes with a positive prior
  /// weight act as if that much mass had already been observed.
  static GmmState with_prior(std::vector<Vec> means, std::vector<linalg::SymMat> covs,
                             std::vector<double> weights, double jitter = linalg::kDefaultJitter);

  /// Folds one batch in. feats is N x dim, weights is N x n_classes (softmax rows).
  /// Classes that receive no mass in the batch are left untouched.
  void update(const Matrix& feats, const Matrix& weights);

  /// log p(feat | c) for each class; -inf for modes that never received mass.
  Vec class_log_likelihoods(std::span<const double> feat) const;

  /// Number of stored reals: (dim + dim(dim+1)/2 + 1) per class.
  std::size_t memory_footprint() const noexcept;

  std::size_t n_classes() const noexcept { return modes_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  double jitter() const noexcept { return jitter_; }
  std::uint64_t batch_counter() const noexcept { return batch_counter_; }
  const ModeState& mode(std::size_t c) const { return modes_.at(c); }
  const std::vector<ModeState>& modes() const noexcept { return modes_; }

  std::vector<Vec> means() const;

  nlohmann::ordered_json to_json() const;
  static GmmState from_json(const nlohmann::json& j);

 private:
  void refresh_factor(ModeState& mode) const;

  std::vector<ModeState> modes_;
  std::size_t dim_;
  double jitter_;
  std::uint64_t batch_counter_ = 0;
};

std::size_t memory_footprint(std::size_t dim, std::size_t n_classes) noexcept;

}  // namespace gmmuda::gmm
