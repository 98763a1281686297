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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmuda/linalg.hpp"

namespace gmmuda::model {

using linalg::Matrix;
using linalg::Vec;

struct ModelDims {
  std::size_t d_in = 20;
  std::size_t fd = 256;    // feature extractor width
  std::size_t fd_r = 64;   // reduced feature width seen by the mixture
  std::size_t n_classes = 9;

  bool operator==(const ModelDims&) const = default;
};

// Weights of g (tanh layer), r (linear reduction) and h (linear classifier).
// The same layout is used for gradients and momentum buffers.
struct Parameters {
  Matrix w_g;  // fd x d_in
  Vec b_g;     // fd
  Matrix w_r;  // fd_r x fd
  Vec b_r;     // fd_r
  Matrix w_h;  // n_classes x fd
  Vec b_h;     // n_classes

  static Parameters zeros(const ModelDims& dims);

  std::array<std::span<double>, 6> tensors();
  std::array<std::span<const double>, 6> tensors() const;

  bool all_finite() const;
  bool operator==(const Parameters&) const = default;
};

using Gradients = Parameters;

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

struct ForwardCache {
  Vec input;
  Vec feature;  // g(x) = tanh(W_g x + b_g)
  Vec reduced;  // r(g(x))
  Vec logits;   // h(g(x))
  Vec softmax;
};

// Upstream gradients for one sample. Empty vectors mean zero.
struct OutputGrad {
  Vec d_reduced;
  Vec d_logits;
};

Vec softmax(std::span<const double> logits);

class ToyModel {
 public:
  ToyModel() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from seed.
  ToyModel(const ModelDims& dims, std::uint64_t seed);
  ToyModel(const ModelDims& dims, Parameters params);

  const ModelDims& dims() const noexcept { return dims_; }
  const Parameters& params() const noexcept { return params_; }
  Parameters& params() noexcept { return params_; }
  const Parameters& velocity() const noexcept { return velocity_; }
  std::uint64_t seed() const noexcept { return seed_; }

  ForwardCache forward(std::span<const double> x) const;
  std::vector<ForwardCache> forward_batch(const Matrix& x) const;

  /// Exact gradients of sum_i <grads[i], outputs_i> with respect to every parameter.
  Gradients backward(std::span<const ForwardCache> caches, std::span<const OutputGrad> grads) const;

  /// v <- momentum v + g; w <- w - lr v. Throws NonFiniteGradient before touching state.
  void sgd_step(const Gradients& grads, const OptimizerConfig& cfg);

  nlohmann::ordered_json to_json() const;
  static ToyModel from_json(const nlohmann::json& j);

  bool operator==(const ToyModel&) const = default;

 private:
  ModelDims dims_;
  Parameters params_;
  Parameters velocity_;
  std::uint64_t seed_ = 0;
};

struct LabeledSet {
  Matrix x;
  std::vector<std::size_t> labels;
};

struct SourceTrainingConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer{0.05, 0.9};
  std::uint64_t shuffle_seed = 0;
};

/// Minibatch cross-entropy training on labeled source data. Returns mean loss per epoch.
std::vector<double> train_source(ToyModel& model, const LabeledSet& data, const SourceTrainingConfig& cfg);

// Closed-set accuracy of argmax f(x).
double accuracy(const ToyModel& model, const LabeledSet& data);

}  // namespace gmmuda::model
