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
#include "gmmuda/ood_gate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "gmmuda/error.hpp"

namespace gmmuda::ood {

Vec normalize_log_likelihoods(std::span<const double> log_likelihoods) {
  const double top = *std::max_element(log_likelihoods.begin(), log_likelihoods.end());
  Vec p(log_likelihoods.size(), 0.0);
  if (!std::isfinite(top)) {
    throw Error(ErrorCode::NonFiniteInput, "no finite log-likelihood to normalize");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (log_likelihoods[c] == -std::numeric_limits<double>::infinity()) continue;
    p[c] = std::exp(log_likelihoods[c] - top);
    total += p[c];
  }
  for (double& v : p) v /= total;
  return p;
}

double normalized_entropy(std::span<const double> p) {
  if (p.size() < 2) return 0.0;
  // Uniform vectors map to exactly 1 regardless of summation rounding.
  if (std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); })) return 1.0;
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  const double out = h / std::log(static_cast<double>(p.size()));
  return std::clamp(out, 0.0, 1.0);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ThresholdState::ThresholdState(std::size_t n_init, double p_reject) : n_init_(n_init), p_reject_(p_reject) {
  if (n_init == 0) throw Error(ErrorCode::InvalidConfig, "n_init must be positive");
  if (!(p_reject > 0.0 && p_reject < 100.0)) {
    throw Error(ErrorCode::InvalidConfig, "p_reject must lie in (0, 100)");
  }
}

std::size_t ThresholdState::cutoff_rank(std::size_t batch_size) const {
  const double raw = static_cast<double>(batch_size) * (100.0 - p_reject_) / 200.0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(raw)));
}

void ThresholdState::calibrate(std::span<const double> entropies) {
  if (frozen()) throw Error(ErrorCode::AlreadyFrozen, "thresholds are frozen after n_init batches");
  if (entropies.size() < 4) throw Error(ErrorCode::BatchTooSmall, "calibration needs at least 4 samples");

  const std::size_t m = cutoff_rank(entropies.size());
  std::vector<double> sorted(entropies.begin(), entropies.end());
  std::sort(sorted.begin(), sorted.end());
  const double low = sorted[m - 1];
  const double high = sorted[sorted.size() - m];

  sum_low_ += low;
  sum_high_ += high;
  ++batches_seen_;
  tau_k_ = sum_low_ / static_cast<double>(batches_seen_);
  tau_u_ = sum_high_ / static_cast<double>(batches_seen_);
  if (!(tau_k_ < tau_u_)) {
    const double mid = 0.5 * (tau_k_ + tau_u_);
    tau_k_ = mid - kThresholdSeparation;
    tau_u_ = mid + kThresholdSeparation;
  }
}

PseudoLabel pseudo_label(const ThresholdState& ts, std::span<const double> p) {
  if (!ts.calibrated()) throw Error(ErrorCode::Uncalibrated, "thresholds have not seen a batch");
  const double h = normalized_entropy(p);
  if (h <= ts.tau_known()) return PseudoLabel::known(argmax(p));
  if (h >= ts.tau_unknown()) return PseudoLabel::unknown();
  return PseudoLabel::discarded();
}

std::size_t predict(const ThresholdState& ts, std::span<const double> softmax_out, std::span<const double> p) {
  if (!ts.calibrated()) throw Error(ErrorCode::Uncalibrated, "thresholds have not seen a batch");
  if (normalized_entropy(p) <= ts.inference_threshold()) return argmax(softmax_out);
  return softmax_out.size();
}

}  // namespace gmmuda::ood
