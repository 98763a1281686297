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
#include "gmmuda/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "gmmuda/error.hpp"

namespace gmmuda::sim {

namespace {

Vec gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double determinant_sign(Matrix m) {
  const std::size_t n = m.rows();
  double sign = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r) {
      if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
    }
    if (m(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(m(k, c), m(piv, c));
      sign = -sign;
    }
    if (m(k, k) < 0.0) sign = -sign;
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = m(r, k) / m(k, k);
      for (std::size_t c = k; c < n; ++c) m(r, c) -= f * m(k, c);
    }
  }
  return sign;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::PDA: return "PDA";
    case ShiftKind::ODA: return "ODA";
    case ShiftKind::OPDA: return "OPDA";
  }
  return "?";
}

ShiftKind parse_shift_kind(std::string_view name) {
  if (name == "PDA" || name == "pda") return ShiftKind::PDA;
  if (name == "ODA" || name == "oda") return ShiftKind::ODA;
  if (name == "OPDA" || name == "opda") return ShiftKind::OPDA;
  throw Error(ErrorCode::InvalidConfig, "unknown shift kind '" + std::string(name) + "'");
}

std::string_view to_string(PrivatePlacement p) { return p == PrivatePlacement::Random ? "random" : "between"; }

PrivatePlacement parse_private_placement(std::string_view name) {
  if (name == "random") return PrivatePlacement::Random;
  if (name == "between") return PrivatePlacement::Between;
  throw Error(ErrorCode::InvalidConfig, "unknown private_placement '" + std::string(name) + "'");
}

void ShiftSpec::validate() const {
  const auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidSplit, why); };
  if (n_shared == 0) fail("at least one shared class is required");
  switch (kind) {
    case ShiftKind::PDA:
      if (n_target_private != 0 || n_source_private == 0) fail("PDA needs source-private and no target-private classes");
      break;
    case ShiftKind::ODA:
      if (n_source_private != 0 || n_target_private == 0) fail("ODA needs target-private and no source-private classes");
      break;
    case ShiftKind::OPDA:
      if (n_source_private == 0 || n_target_private == 0) fail("OPDA needs private classes on both sides");
      break;
  }
  if (n_source_classes() < 2) fail("at least two source classes are required");
}

std::vector<std::size_t> ShiftSpec::target_classes() const {
  std::vector<std::size_t> out(n_shared);
  std::iota(out.begin(), out.end(), 0);
  for (std::size_t c = n_source_classes(); c < n_total(); ++c) out.push_back(c);
  return out;
}

void DomainSpec::validate() const {
  if (d_in == 0) throw Error(ErrorCode::InvalidConfig, "d_in must be positive");
  if (!(class_sep > 0.0)) throw Error(ErrorCode::InvalidConfig, "class_sep must be positive");
  if (!(noise_sigma_source > 0.0) || !(noise_sigma_target > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "noise sigmas must be positive");
  }
  if (!(rotation_strength >= 0.0)) throw Error(ErrorCode::InvalidConfig, "rotation_strength must be non-negative");
  if (!shift_translation.empty() && shift_translation.size() != d_in) {
    throw Error(ErrorCode::DimensionMismatch, "shift_translation must have d_in entries");
  }
}

Matrix random_rotation(std::size_t dim, double strength, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix a(dim, dim);
  for (std::size_t r = 0; r < dim; ++r) {
    const Vec g = gaussian_vector(dim, rng);
    for (std::size_t c = 0; c < dim; ++c) a(r, c) = (r == c ? 1.0 : 0.0) + strength * g[c];
  }
  // Columns are orthonormalized in place (modified Gram-Schmidt).
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double proj = 0.0;
      for (std::size_t r = 0; r < dim; ++r) proj += a(r, c) * a(r, p);
      for (std::size_t r = 0; r < dim; ++r) a(r, c) -= proj * a(r, p);
    }
    double n = 0.0;
    for (std::size_t r = 0; r < dim; ++r) n += a(r, c) * a(r, c);
    n = std::sqrt(n);
    for (std::size_t r = 0; r < dim; ++r) a(r, c) /= n;
  }
  if (dim > 0 && determinant_sign(a) < 0.0) {
    for (std::size_t r = 0; r < dim; ++r) a(r, dim - 1) = -a(r, dim - 1);
  }
  return a;
}

Vec random_translation(std::size_t dim, double norm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Vec v = gaussian_vector(dim, rng);
  const double n = linalg::norm(v);
  for (double& x : v) x *= norm / n;
  return v;
}

TargetStream::TargetStream(Matrix x, std::vector<std::size_t> labels, std::size_t batch_size,
                           std::size_t unknown_marker)
    : x_(std::move(x)), labels_(std::move(labels)), batch_size_(batch_size), unknown_marker_(unknown_marker) {
  if (labels_.size() != x_.rows()) throw Error(ErrorCode::LengthMismatch, "one label per target sample is required");
  if (batch_size_ == 0) throw Error(ErrorCode::InvalidConfig, "batch size must be positive");
}

std::optional<StreamBatch> TargetStream::next_batch() {
  if (cursor_ >= n_batches()) return std::nullopt;
  StreamBatch b;
  b.index = cursor_;
  b.x = Matrix(batch_size_, x_.cols());
  b.true_labels.resize(batch_size_);
  const std::size_t offset = cursor_ * batch_size_;
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const auto src = x_.row(offset + i);
    std::copy(src.begin(), src.end(), b.x.row(i).begin());
    b.true_labels[i] = labels_[offset + i];
  }
  ++cursor_;
  return b;
}

Task make_task(const ShiftSpec& shift, const DomainSpec& dom, const TaskSizes& sizes, std::uint64_t seed) {
  shift.validate();
  dom.validate();
  const std::size_t d = dom.d_in;
  const std::size_t n_total = shift.n_total();
  const std::size_t n_known = shift.n_source_classes();

  Task task;
  task.n_known = n_known;

  std::mt19937_64 center_rng(derive_seed(seed, 0));
  task.centers = Matrix(n_total, d);
  for (std::size_t c = 0; c < n_total; ++c) {
    Vec g = gaussian_vector(d, center_rng);
    const double n = linalg::norm(g);
    for (std::size_t k = 0; k < d; ++k) task.centers(c, k) = dom.class_sep * g[k] / n;
  }
  if (dom.private_placement == PrivatePlacement::Between) {
    // Distinct unordered pairs keep the private centers distinct from each other.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < n_known; ++a)
      for (std::size_t b = a + 1; b < n_known; ++b) pairs.emplace_back(a, b);
    if (pairs.size() < n_total - n_known) {
      throw Error(ErrorCode::InvalidSplit, "too few source class pairs to place the target-private classes");
    }
    std::shuffle(pairs.begin(), pairs.end(), center_rng);
    for (std::size_t c = n_known; c < n_total; ++c) {
      const auto [a, b] = pairs[c - n_known];
      for (std::size_t k = 0; k < d; ++k) task.centers(c, k) = 0.5 * (task.centers(a, k) + task.centers(b, k));
    }
  }

  task.rotation = random_rotation(d, dom.rotation_strength, dom.rotation_seed);
  const Vec translation = dom.shift_translation.empty() ? Vec(d, 0.0) : dom.shift_translation;

  Matrix target_centers(n_total, d);
  for (std::size_t c = 0; c < n_total; ++c) {
    for (std::size_t r = 0; r < d; ++r) {
      double s = translation[r];
      for (std::size_t k = 0; k < d; ++k) s += task.rotation(r, k) * task.centers(c, k);
      target_centers(c, r) = s;
    }
  }

  const auto draw_set = [&](const Matrix& centers, const std::vector<std::size_t>& labels, double sigma,
                            std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    Matrix x(labels.size(), d);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t k = 0; k < d; ++k) x(i, k) = centers(labels[i], k) + noise(rng);
    }
    return x;
  };

  const auto balanced = [](std::size_t n_classes, std::size_t per_class) {
    std::vector<std::size_t> labels(n_classes * per_class);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % n_classes;
    return labels;
  };

  std::mt19937_64 source_rng(derive_seed(seed, 1));
  task.source_train.labels = balanced(n_known, sizes.source_per_class);
  task.source_train.x = draw_set(task.centers, task.source_train.labels, dom.noise_sigma_source, source_rng);
  task.source_holdout.labels = balanced(n_known, sizes.holdout_per_class);
  task.source_holdout.x = draw_set(task.centers, task.source_holdout.labels, dom.noise_sigma_source, source_rng);

  const auto target_classes = shift.target_classes();
  const std::size_t n_target = sizes.n_batches * sizes.batch_size;
  std::vector<std::size_t> global(n_target);
  for (std::size_t i = 0; i < n_target; ++i) global[i] = target_classes[i % target_classes.size()];
  std::mt19937_64 target_rng(derive_seed(seed, 2));
  std::shuffle(global.begin(), global.end(), target_rng);
  Matrix target_x = draw_set(target_centers, global, dom.noise_sigma_target, target_rng);

  std::vector<std::size_t> labels(n_target);
  for (std::size_t i = 0; i < n_target; ++i) labels[i] = global[i] < n_known ? global[i] : n_known;
  task.target = TargetStream(std::move(target_x), std::move(labels), sizes.batch_size, n_known);
  return task;
}

}  // namespace gmmuda::sim
