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

namespace gmmuda::linalg {

using Vec = std::vector<double>;

// Dense row-major matrix. Used for weight matrices and for batches of row vectors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Packed lower-triangular index, row-major: (i, j) with j <= i.
constexpr std::size_t packed_index(std::size_t i, std::size_t j) noexcept {
  return i * (i + 1) / 2 + j;
}

constexpr std::size_t packed_size(std::size_t dim) noexcept { return dim * (dim + 1) / 2; }

// Symmetric matrix stored as its lower triangle (dim*(dim+1)/2 values).
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(std::size_t dim) : dim_(dim), packed_(packed_size(dim), 0.0) {}
  SymMat(std::size_t dim, std::vector<double> packed);

  static SymMat identity(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }

  double operator()(std::size_t i, std::size_t j) const {
    return i >= j ? packed_[packed_index(i, j)] : packed_[packed_index(j, i)];
  }
  // Lower-triangle access; requires j <= i.
  double& lower(std::size_t i, std::size_t j) { return packed_[packed_index(i, j)]; }

  std::span<const double> packed() const noexcept { return packed_; }
  std::span<double> packed() noexcept { return packed_; }

  SymMat& operator*=(double s);
  bool all_finite() const;
  bool operator==(const SymMat&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> packed_;
};

// Cholesky factor L of (m + jitter I), packed like SymMat but read as lower-triangular.
class LowerTriangular {
 public:
  LowerTriangular() = default;
  LowerTriangular(std::size_t dim, std::vector<double> packed, double jitter)
      : dim_(dim), packed_(std::move(packed)), jitter_(jitter) {}

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::size_t i, std::size_t j) const {
    return j <= i ? packed_[packed_index(i, j)] : 0.0;
  }
  std::span<const double> packed() const noexcept { return packed_; }

  // Jitter actually added to the diagonal, after any retries.
  double jitter() const noexcept { return jitter_; }

  double log_determinant() const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> packed_;
  double jitter_ = 0.0;
};

inline constexpr double kDefaultJitter = 1e-6;
inline constexpr int kJitterRetries = 8;

// Factor m + jitter*I. On failure the jitter is doubled (or set to kDefaultJitter when
// zero) and the factorization retried, at most kJitterRetries times.
// Throws Error(NotPositiveDefinite) once the ladder is exhausted.
LowerTriangular cholesky(const SymMat& m, double jitter);

// Solves L y = b.
Vec forward_substitute(const LowerTriangular& l, std::span<const double> b);

// log N(x; mean, L L^T) via one triangular solve.
double log_gauss_density(std::span<const double> x, std::span<const double> mean,
                         const LowerTriangular& chol);

// acc += w * d d^T
void weighted_outer_accumulate(SymMat& acc, std::span<const double> d, double w);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace gmmuda::linalg
