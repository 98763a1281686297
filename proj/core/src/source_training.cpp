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
#include <algorithm>
#include <numeric>
#include <random>

#include "gmmuda/error.hpp"
#include "gmmuda/objectives.hpp"
#include "gmmuda/ood_gate.hpp"
#include "gmmuda/toy_model.hpp"

namespace gmmuda::model {

std::vector<double> train_source(ToyModel& model, const LabeledSet& data, const SourceTrainingConfig& cfg) {
  const std::size_t n = data.x.rows();
  if (data.labels.size() != n) throw Error(ErrorCode::LengthMismatch, "one label per source sample is required");
  for (std::size_t y : data.labels) {
    if (y >= model.dims().n_classes) throw Error(ErrorCode::InvalidConfig, "source label outside the known classes");
  }
  if (cfg.batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be positive");

  std::vector<double> epoch_losses;
  if (n == 0) return epoch_losses;

  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::size_t b = stop - start;
      std::vector<ForwardCache> caches;
      caches.reserve(b);
      linalg::Matrix probs(b, model.dims().n_classes);
      std::vector<std::size_t> labels(b);
      for (std::size_t k = 0; k < b; ++k) {
        caches.push_back(model.forward(data.x.row(order[start + k])));
        std::copy(caches.back().softmax.begin(), caches.back().softmax.end(), probs.row(k).begin());
        labels[k] = data.labels[order[start + k]];
      }
      const auto ce = objectives::cross_entropy_loss(probs, labels);
      loss_sum += ce.loss * static_cast<double>(b);

      std::vector<OutputGrad> up(b);
      for (std::size_t k = 0; k < b; ++k) up[k].d_logits.assign(ce.grads.row(k).begin(), ce.grads.row(k).end());
      model.sgd_step(model.backward(caches, up), cfg.optimizer);
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(n));
  }
  return epoch_losses;
}

double accuracy(const ToyModel& model, const LabeledSet& data) {
  if (data.x.rows() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    if (ood::argmax(model.forward(data.x.row(i)).softmax) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.x.rows());
}

}  // namespace gmmuda::model
