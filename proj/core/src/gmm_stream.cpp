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
#include "gmmuda/gmm_stream.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "gmmuda/error.hpp"

namespace gmmuda::gmm {

namespace {

constexpr int kSnapshotVersion = 1;

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, std::string(what) + " is not finite");
  }
}

}  // namespace

std::size_t memory_footprint(std::size_t dim, std::size_t n_classes) noexcept {
  return (dim + linalg::packed_size(dim) + 1) * n_classes;
}

GmmState::GmmState(std::size_t n_classes, std::size_t dim, double jitter)
    : dim_(dim), jitter_(jitter) {
  if (n_classes == 0 || dim == 0) {
    throw Error(ErrorCode::DimensionMismatch, "mixture needs at least one class and one dimension");
  }
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) {
    throw Error(ErrorCode::NonFiniteInput, "jitter must be finite and non-negative");
  }
  modes_.resize(n_classes);
  for (auto& m : modes_) {
    m.mean.assign(dim, 0.0);
    m.cov = linalg::SymMat(dim);
  }
}

GmmState GmmState::with_prior(std::vector<Vec> means, std::vector<linalg::SymMat> covs,
                              std::vector<double> weights, double jitter) {
  if (means.empty() || means.size() != covs.size() || means.size() != weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "prior means, covariances and weights must align");
  }
  GmmState state(means.size(), means.front().size(), jitter);
  for (std::size_t c = 0; c < means.size(); ++c) {
    if (means[c].size() != state.dim_ || covs[c].dim() != state.dim_) {
      throw Error(ErrorCode::DimensionMismatch, "prior mode " + std::to_string(c) + " has wrong dimension");
    }
    check_finite(means[c], "prior mean");
    check_finite(covs[c].packed(), "prior covariance");
    if (!(weights[c] >= 0.0) || !std::isfinite(weights[c])) {
      throw Error(ErrorCode::NonFiniteInput, "prior weight must be finite and non-negative");
    }
    auto& mode = state.modes_[c];
    mode.mean = std::move(means[c]);
    mode.cov = std::move(covs[c]);
    mode.weight = weights[c];
    if (mode.initialized()) state.refresh_factor(mode);
  }
  return state;
}

void GmmState::refresh_factor(ModeState& mode) const { mode.chol = linalg::cholesky(mode.cov, jitter_); }

void GmmState::update(const Matrix& feats, const Matrix& weights) {
  const std::size_t n = feats.rows();
  if (n == 0 || weights.rows() != n) {
    throw Error(ErrorCode::DimensionMismatch, "features and weights need the same non-zero row count");
  }
  if (feats.cols() != dim_ || weights.cols() != modes_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "batch shape does not match the mixture");
  }
  check_finite(feats.flat(), "feature");
  for (double w : weights.flat()) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::NonFiniteInput, "weights must be finite and non-negative");
    }
  }

  Vec diff(dim_);
  for (std::size_t c = 0; c < modes_.size(); ++c) {
    ModeState& mode = modes_[c];

    double batch_mass = 0.0;
    Vec weighted_sum(dim_, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights(i, c);
      if (w == 0.0) continue;
      batch_mass += w;
      const auto r = feats.row(i);
      for (std::size_t d = 0; d < dim_; ++d) weighted_sum[d] += w * r[d];
    }
    if (batch_mass == 0.0) continue;

    const double prev_mass = mode.weight;
    const double mass = prev_mass + batch_mass;

    for (std::size_t d = 0; d < dim_; ++d) {
      mode.mean[d] = (prev_mass * mode.mean[d] + weighted_sum[d]) / mass;
    }

    // Covariance recursion around the new mean.
    linalg::SymMat cov = mode.cov;
    cov *= prev_mass;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights(i, c);
      if (w == 0.0) continue;
      const auto r = feats.row(i);
      for (std::size_t d = 0; d < dim_; ++d) diff[d] = r[d] - mode.mean[d];
      linalg::weighted_outer_accumulate(cov, diff, w);
    }
    cov *= 1.0 / mass;

    mode.cov = std::move(cov);
    mode.weight = mass;
    refresh_factor(mode);
  }
  ++batch_counter_;
}

Vec GmmState::class_log_likelihoods(std::span<const double> feat) const {
  if (feat.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "feature dimension differs from mixture");
  Vec out(modes_.size(), -std::numeric_limits<double>::infinity());
  bool any = false;
  for (std::size_t c = 0; c < modes_.size(); ++c) {
    const ModeState& mode = modes_[c];
    if (!mode.initialized()) continue;
    any = true;
    out[c] = linalg::log_gauss_density(feat, mode.mean, *mode.chol);
  }
  if (!any) throw Error(ErrorCode::NoInitializedMode, "no mode has received mass yet");
  return out;
}

std::size_t GmmState::memory_footprint() const noexcept { return gmm::memory_footprint(dim_, modes_.size()); }

std::vector<Vec> GmmState::means() const {
  std::vector<Vec> out;
  out.reserve(modes_.size());
  for (const auto& m : modes_) out.push_back(m.mean);
  return out;
}

// Field order: format, version, n_classes, dim, jitter, batch_counter, then per mode
// weight, mean, cov_packed (lower triangle, row-major).
nlohmann::ordered_json GmmState::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "gmmuda.gmm";
  j["version"] = kSnapshotVersion;
  j["n_classes"] = modes_.size();
  j["dim"] = dim_;
  j["jitter"] = jitter_;
  j["batch_counter"] = batch_counter_;
  auto modes = nlohmann::ordered_json::array();
  for (const auto& m : modes_) {
    nlohmann::ordered_json jm;
    jm["weight"] = m.weight;
    jm["mean"] = m.mean;
    jm["cov_packed"] = std::vector<double>(m.cov.packed().begin(), m.cov.packed().end());
    modes.push_back(std::move(jm));
  }
  j["modes"] = std::move(modes);
  return j;
}

GmmState GmmState::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gmmuda.gmm" || j.at("version").get<int>() != kSnapshotVersion) {
      throw Error(ErrorCode::Io, "not a version 1 mixture snapshot");
    }
    const auto n_classes = j.at("n_classes").get<std::size_t>();
    const auto dim = j.at("dim").get<std::size_t>();
    GmmState state(n_classes, dim, j.at("jitter").get<double>());
    const auto& modes = j.at("modes");
    if (modes.size() != n_classes) throw Error(ErrorCode::Io, "mode count mismatch in snapshot");
    for (std::size_t c = 0; c < n_classes; ++c) {
      ModeState& m = state.modes_[c];
      m.weight = modes[c].at("weight").get<double>();
      m.mean = modes[c].at("mean").get<Vec>();
      m.cov = linalg::SymMat(dim, modes[c].at("cov_packed").get<std::vector<double>>());
      if (m.mean.size() != dim) throw Error(ErrorCode::Io, "mean length mismatch in snapshot");
      if (m.initialized()) state.refresh_factor(m);
    }
    state.batch_counter_ = j.at("batch_counter").get<std::uint64_t>();
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed mixture snapshot: ") + e.what());
  }
}

}  // namespace gmmuda::gmm
