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
#include <span>

#include "gmmuda/linalg.hpp"

namespace gmmuda::ood {

using linalg::Vec;

// Turns per-class log-likelihoods into probabilities with uniform class priors.
// -inf entries (uninitialized modes) get probability 0.
Vec normalize_log_likelihoods(std::span<const double> log_likelihoods);

// Shannon entropy divided by log(n), with 0 log 0 = 0. Returns 0 for n < 2.
double normalized_entropy(std::span<const double> p);

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> v);

struct PseudoLabel {
  enum class Kind : std::uint8_t { Known, Unknown, Discarded };

  Kind kind = Kind::Discarded;
  std::size_t cls = 0;  // meaningful only for Known

  static PseudoLabel known(std::size_t c) { return {Kind::Known, c}; }
  static PseudoLabel unknown() { return {Kind::Unknown, 0}; }
  static PseudoLabel discarded() { return {Kind::Discarded, 0}; }

  bool is_known() const noexcept { return kind == Kind::Known; }
  bool is_unknown() const noexcept { return kind == Kind::Unknown; }
  bool is_discarded() const noexcept { return kind == Kind::Discarded; }

  bool operator==(const PseudoLabel&) const = default;
};

inline constexpr double kThresholdSeparation = 1e-6;

/// Dual entropy thresholds calibrated on the first n_init batches.
///
/// Each calibration batch contributes its m-th smallest and m-th largest entropy,
/// m = max(1, round(N_b (100 - p_reject) / 200)); the thresholds are running
/// averages of those cutoffs and are frozen once n_init batches were seen.
class ThresholdState {
 public:
  ThresholdState(std::size_t n_init, double p_reject);

  void calibrate(std::span<const double> entropies);

  double tau_known() const noexcept { return tau_k_; }
  double tau_unknown() const noexcept { return tau_u_; }
  // Midpoint of the two thresholds, used at inference.
  double inference_threshold() const noexcept { return 0.5 * (tau_k_ + tau_u_); }

  bool frozen() const noexcept { return batches_seen_ >= n_init_; }
  bool calibrated() const noexcept { return batches_seen_ >= 1; }
  std::size_t batches_seen() const noexcept { return batches_seen_; }
  std::size_t n_init() const noexcept { return n_init_; }
  double p_reject() const noexcept { return p_reject_; }

  // Number of samples on each side kept by the cutoff rule for a batch of n.
  std::size_t cutoff_rank(std::size_t batch_size) const;

 private:
  double tau_k_ = 0.0;
  double tau_u_ = 0.0;
  double sum_low_ = 0.0;
  double sum_high_ = 0.0;
  std::size_t batches_seen_ = 0;
  std::size_t n_init_;
  double p_reject_;
};

// Three-way decision: entropy <= tau_k -> Known(argmax p), >= tau_u -> Unknown, else Discarded.
PseudoLabel pseudo_label(const ThresholdState& ts, std::span<const double> p);

// Returns argmax of the classifier output when the mixture entropy is at most the
// inference threshold, otherwise the unknown index softmax_out.size().
std::size_t predict(const ThresholdState& ts, std::span<const double> softmax_out, std::span<const double> p);

}  // namespace gmmuda::ood
