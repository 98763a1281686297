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
#include "gmmuda/objectives.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "gmmuda/error.hpp"

namespace gmmuda::objectives {

namespace {

double log_sum_exp(std::span<const double> v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

bool same_positive_class(const PseudoLabel& a, const PseudoLabel& b, bool unknown_pairs) {
  if (a.is_known() && b.is_known()) return a.cls == b.cls;
  return unknown_pairs && a.is_unknown() && b.is_unknown();
}

// Chain dL/dq through softmax: dz_j = q_j (dq_j - sum_c q_c dq_c).
void softmax_backward(std::span<const double> q, std::span<const double> dq, std::span<double> dz) {
  double inner = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c) inner += q[c] * dq[c];
  for (std::size_t c = 0; c < q.size(); ++c) dz[c] = q[c] * (dq[c] - inner);
}

}  // namespace

LossResult contrastive_loss(const Matrix& reduced, std::span<const PseudoLabel> labels,
                            std::span<const Vec> prototypes, const ContrastiveOptions& opts) {
  if (!(opts.temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
  const std::size_t n = reduced.rows();
  const std::size_t dim = reduced.cols();
  if (labels.size() != n) throw Error(ErrorCode::LengthMismatch, "one pseudo-label per feature row is required");

  LossResult out;
  out.grads = Matrix(n, dim);

  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i].is_discarded()) members.push_back(i);
  }
  if (members.empty()) return out;

  Matrix z(n, dim);
  Vec norms(n, 0.0);
  for (std::size_t i : members) {
    norms[i] = linalg::norm(reduced.row(i));
    if (norms[i] == 0.0) continue;
    for (std::size_t d = 0; d < dim; ++d) z(i, d) = reduced(i, d) / norms[i];
  }

  const double inv_t = 1.0 / opts.temperature;
  Matrix dz(n, dim);
  double total = 0.0;
  std::size_t terms = 0;

  // Sample-sample positives.
  Vec logits;
  std::vector<std::size_t> others;
  for (std::size_t i : members) {
    const PseudoLabel& li = labels[i];
    if (!li.is_known() && !(opts.unknown_positive_pairs && li.is_unknown())) continue;

    others.clear();
    logits.clear();
    std::size_t n_pos = 0;
    for (std::size_t l : members) {
      if (l == i) continue;
      others.push_back(l);
      logits.push_back(linalg::dot(z.row(l), z.row(i)) * inv_t);
      if (same_positive_class(li, labels[l], opts.unknown_positive_pairs)) ++n_pos;
    }
    if (n_pos == 0) continue;

    const double lse = log_sum_exp(logits);
    total += static_cast<double>(n_pos) * lse;
    terms += n_pos;
    auto dzi = dz.row(i);
    const auto zi = z.row(i);
    for (std::size_t k = 0; k < others.size(); ++k) {
      const std::size_t l = others[k];
      const double q = std::exp(logits[k] - lse) * static_cast<double>(n_pos) * inv_t;
      const auto zl = z.row(l);
      auto dzl = dz.row(l);
      for (std::size_t d = 0; d < dim; ++d) {
        dzi[d] += q * zl[d];
        dzl[d] += q * zi[d];
      }
      if (same_positive_class(li, labels[l], opts.unknown_positive_pairs)) {
        total -= logits[k];
        for (std::size_t d = 0; d < dim; ++d) {
          dzi[d] -= inv_t * zl[d];
          dzl[d] -= inv_t * zi[d];
        }
      }
    }
  }

  // Prototype anchors: for class c, prototype vs all participating samples.
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    std::size_t n_c = 0;
    for (std::size_t i : members) {
      if (labels[i].is_known() && labels[i].cls == c) ++n_c;
    }
    if (n_c == 0) continue;
    if (prototypes[c].size() != dim) throw Error(ErrorCode::DimensionMismatch, "prototype dimension mismatch");

    Vec m(prototypes[c]);
    const double m_norm = linalg::norm(m);
    for (double& v : m) v = m_norm > 0.0 ? v / m_norm : 0.0;

    logits.assign(members.size(), 0.0);
    for (std::size_t k = 0; k < members.size(); ++k) logits[k] = linalg::dot(m, z.row(members[k])) * inv_t;
    const double lse = log_sum_exp(logits);
    total += static_cast<double>(n_c) * lse;
    terms += n_c;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t l = members[k];
      double coeff = std::exp(logits[k] - lse) * static_cast<double>(n_c) * inv_t;
      if (labels[l].is_known() && labels[l].cls == c) {
        total -= logits[k];
        coeff -= inv_t;
      }
      auto dzl = dz.row(l);
      for (std::size_t d = 0; d < dim; ++d) dzl[d] += coeff * m[d];
    }
  }

  if (terms == 0) return out;
  const double scale = 1.0 / static_cast<double>(terms);
  out.loss = total * scale;
  out.n_terms = terms;

  // Back through the L2 normalization: dr = (dz - (dz . z) z) / |r|.
  for (std::size_t i : members) {
    if (norms[i] == 0.0) continue;
    const auto zi = z.row(i);
    const auto dzi = dz.row(i);
    const double proj = linalg::dot(dzi, zi);
    auto gi = out.grads.row(i);
    for (std::size_t d = 0; d < dim; ++d) gi[d] = scale * (dzi[d] - proj * zi[d]) / norms[i];
  }
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorCode::DimensionMismatch, "distributions differ in length");
  double out = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] == 0.0) continue;
    out += p[c] * std::log(p[c]) - p[c] * std::log(std::max(q[c], kProbabilityFloor));
  }
  return out;
}

LossResult kld_loss(const Matrix& softmax_outs, std::span<const PseudoLabel> labels) {
  const std::size_t n = softmax_outs.rows();
  const std::size_t k = softmax_outs.cols();
  if (labels.size() != n) throw Error(ErrorCode::LengthMismatch, "one pseudo-label per softmax row is required");

  LossResult out;
  out.grads = Matrix(n, k);
  const Vec uniform(k, 1.0 / static_cast<double>(k));
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);
  Vec dq(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i].is_discarded()) continue;
    const double sign = (labels[i].is_known() ? -1.0 : 1.0) * scale;
    const auto q = softmax_outs.row(i);
    out.loss += sign * kl_divergence(uniform, q);
    ++out.n_terms;
    for (std::size_t c = 0; c < k; ++c) dq[c] = q[c] > kProbabilityFloor ? -sign * uniform[c] / q[c] : 0.0;
    softmax_backward(q, dq, out.grads.row(i));
  }
  return out;
}

LossResult cross_entropy_loss(const Matrix& softmax_outs, std::span<const std::size_t> labels) {
  const std::size_t n = softmax_outs.rows();
  const std::size_t k = softmax_outs.cols();
  if (labels.size() != n) throw Error(ErrorCode::LengthMismatch, "one label per softmax row is required");

  LossResult out;
  out.grads = Matrix(n, k);
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);
  Vec dq(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    if (y >= k) throw Error(ErrorCode::DimensionMismatch, "label " + std::to_string(y) + " out of range");
    const auto q = softmax_outs.row(i);
    out.loss -= scale * std::log(std::max(q[y], kProbabilityFloor));
    std::fill(dq.begin(), dq.end(), 0.0);
    if (q[y] > kProbabilityFloor) dq[y] = -scale / q[y];
    softmax_backward(q, dq, out.grads.row(i));
  }
  out.n_terms = n;
  return out;
}

CombinedLoss combined_loss(const LossResult& contrastive, const LossResult& kld, double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be non-negative");
  CombinedLoss out;
  out.contrastive = contrastive.loss;
  out.kld = kld.loss;
  out.total = contrastive.loss + lambda * kld.loss;
  out.reduced_grads = contrastive.grads;
  out.logit_grads = kld.grads;
  for (double& v : out.logit_grads.flat()) v *= lambda;
  return out;
}

}  // namespace gmmuda::objectives
