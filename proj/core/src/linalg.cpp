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
#include "gmmuda/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gmmuda/error.hpp"

namespace gmmuda::linalg {

namespace {

bool try_factor(const SymMat& m, double jitter, std::vector<double>& out) {
  const std::size_t n = m.dim();
  out.assign(packed_size(n), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = m(i, j);
      if (i == j) sum += jitter;
      const double* li = out.data() + packed_index(i, 0);
      const double* lj = out.data() + packed_index(j, 0);
      for (std::size_t k = 0; k < j; ++k) sum -= li[k] * lj[k];
      if (i == j) {
        if (!(sum > 0.0) || !std::isfinite(sum)) return false;
        out[packed_index(i, i)] = std::sqrt(sum);
      } else {
        out[packed_index(i, j)] = sum / out[packed_index(j, j)];
      }
    }
  }
  return true;
}

}  // namespace

SymMat::SymMat(std::size_t dim, std::vector<double> packed) : dim_(dim), packed_(std::move(packed)) {
  if (packed_.size() != packed_size(dim)) {
    throw Error(ErrorCode::DimensionMismatch,
                "packed storage has " + std::to_string(packed_.size()) + " entries, expected " +
                    std::to_string(packed_size(dim)));
  }
}

SymMat SymMat::identity(std::size_t dim) {
  SymMat m(dim);
  for (std::size_t i = 0; i < dim; ++i) m.lower(i, i) = 1.0;
  return m;
}

SymMat& SymMat::operator*=(double s) {
  for (double& v : packed_) v *= s;
  return *this;
}

bool SymMat::all_finite() const {
  for (double v : packed_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double LowerTriangular::log_determinant() const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) s += std::log(packed_[packed_index(i, i)]);
  return 2.0 * s;
}

LowerTriangular cholesky(const SymMat& m, double jitter) {
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) {
    throw Error(ErrorCode::NonFiniteInput, "jitter must be finite and non-negative");
  }
  if (!m.all_finite()) throw Error(ErrorCode::NonFiniteInput, "matrix has non-finite entries");

  std::vector<double> packed;
  double current = jitter;
  for (int attempt = 0; attempt <= kJitterRetries; ++attempt) {
    if (try_factor(m, current, packed)) return LowerTriangular(m.dim(), std::move(packed), current);
    current = current > 0.0 ? 2.0 * current : kDefaultJitter;
  }
  throw Error(ErrorCode::NotPositiveDefinite,
              "factorization failed with jitter up to " + std::to_string(current / 2.0));
}

Vec forward_substitute(const LowerTriangular& l, std::span<const double> b) {
  const std::size_t n = l.dim();
  if (b.size() != n) throw Error(ErrorCode::DimensionMismatch, "rhs length differs from factor");
  const auto packed = l.packed();
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = packed.data() + packed_index(i, 0);
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= row[k] * y[k];
    y[i] = sum / row[i];
  }
  return y;
}

double log_gauss_density(std::span<const double> x, std::span<const double> mean,
                         const LowerTriangular& chol) {
  const std::size_t n = chol.dim();
  if (x.size() != n || mean.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "point, mean and covariance dimensions differ");
  }
  Vec diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - mean[i];
  const Vec y = forward_substitute(chol, diff);
  const double maha = dot(y, y);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  return -0.5 * (static_cast<double>(n) * log_2pi + chol.log_determinant() + maha);
}

void weighted_outer_accumulate(SymMat& acc, std::span<const double> d, double w) {
  const std::size_t n = acc.dim();
  if (d.size() != n) throw Error(ErrorCode::DimensionMismatch, "vector length differs from matrix");
  if (w == 0.0) return;
  auto packed = acc.packed();
  for (std::size_t i = 0; i < n; ++i) {
    const double wdi = w * d[i];
    double* row = packed.data() + packed_index(i, 0);
    for (std::size_t j = 0; j <= i; ++j) row[j] += wdi * d[j];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace gmmuda::linalg
