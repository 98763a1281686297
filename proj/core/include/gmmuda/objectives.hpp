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
#include <span>
#include <vector>

#include "gmmuda/linalg.hpp"
#include "gmmuda/ood_gate.hpp"

namespace gmmuda::objectives {

using linalg::Matrix;
using linalg::Vec;
using ood::PseudoLabel;

inline constexpr double kProbabilityFloor = 1e-12;

// Loss value plus one gradient row per input row (reduced features or logits).
struct LossResult {
  double loss = 0.0;
  Matrix grads;
  std::size_t n_terms = 0;
};

struct ContrastiveOptions {
  double temperature = 0.1;
  // Let samples pseudo-labeled Unknown attract each other (ablation switch).
  bool unknown_positive_pairs = false;
};

/// Prototype-anchored supervised contrastive loss over the 2N_b originals plus views.
///
/// Similarities are cosine. Sample pairs with equal Known labels are positives, every
/// Known sample is also pulled toward its class prototype against the other samples.
/// Unknown samples only appear in denominators, Discarded samples are excluded
/// entirely. The sum is divided by the number of numerator terms. Prototypes are
/// constants; gradients are returned with respect to the raw reduced features.
LossResult contrastive_loss(const Matrix& reduced, std::span<const PseudoLabel> labels,
                            std::span<const Vec> prototypes, const ContrastiveOptions& opts = {});

// D_KL(p || q) with q floored at kProbabilityFloor inside the log.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// (-sum_{Known} D_KL(u || f(x)) + sum_{Unknown} D_KL(u || f(x))) / N, N = all rows
/// including Discarded ones. Gradients are per logit.
LossResult kld_loss(const Matrix& softmax_outs, std::span<const PseudoLabel> labels);

// Mean cross-entropy; gradients are per logit.
LossResult cross_entropy_loss(const Matrix& softmax_outs, std::span<const std::size_t> labels);

struct CombinedLoss {
  double total = 0.0;
  double contrastive = 0.0;
  double kld = 0.0;
  Matrix reduced_grads;
  Matrix logit_grads;
};

// L = L_C + lambda L_KLD with the KLD gradients scaled by lambda.
CombinedLoss combined_loss(const LossResult& contrastive, const LossResult& kld, double lambda);

}  // namespace gmmuda::objectives
