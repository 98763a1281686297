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
#include "gmmuda/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "gmmuda/error.hpp"

namespace gmmuda::model {

namespace {

constexpr int kCheckpointVersion = 1;

void fill_uniform(std::span<double> values, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : values) v = dist(rng);
}

// y = W x + b
void affine(const Matrix& w, std::span<const double> b, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double s = b[r];
    for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

// grad_w += dy x^T ; grad_b += dy ; dx += W^T dy
void affine_backward(const Matrix& w, std::span<const double> x, std::span<const double> dy, Matrix& grad_w,
                     std::span<double> grad_b, std::span<double> dx) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    grad_b[r] += g;
    auto gw = grad_w.row(r);
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) {
      gw[c] += g * x[c];
      dx[c] += g * wr[c];
    }
  }
}

nlohmann::ordered_json matrix_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.flat().begin(), m.flat().end());
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  if (j.at("rows").get<std::size_t>() != rows || j.at("cols").get<std::size_t>() != cols) {
    throw Error(ErrorCode::Io, "matrix shape mismatch in checkpoint");
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw Error(ErrorCode::Io, "matrix data length mismatch in checkpoint");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.flat().begin());
  return m;
}

nlohmann::ordered_json params_json(const Parameters& p) {
  nlohmann::ordered_json j;
  j["w_g"] = matrix_json(p.w_g);
  j["b_g"] = p.b_g;
  j["w_r"] = matrix_json(p.w_r);
  j["b_r"] = p.b_r;
  j["w_h"] = matrix_json(p.w_h);
  j["b_h"] = p.b_h;
  return j;
}

Vec vec_from_json(const nlohmann::json& j, std::size_t n) {
  auto v = j.get<Vec>();
  if (v.size() != n) throw Error(ErrorCode::Io, "vector length mismatch in checkpoint");
  return v;
}

Parameters params_from_json(const nlohmann::json& j, const ModelDims& d) {
  Parameters p;
  p.w_g = matrix_from_json(j.at("w_g"), d.fd, d.d_in);
  p.b_g = vec_from_json(j.at("b_g"), d.fd);
  p.w_r = matrix_from_json(j.at("w_r"), d.fd_r, d.fd);
  p.b_r = vec_from_json(j.at("b_r"), d.fd_r);
  p.w_h = matrix_from_json(j.at("w_h"), d.n_classes, d.fd);
  p.b_h = vec_from_json(j.at("b_h"), d.n_classes);
  return p;
}

}  // namespace

Parameters Parameters::zeros(const ModelDims& d) {
  return Parameters{Matrix(d.fd, d.d_in), Vec(d.fd, 0.0),        Matrix(d.fd_r, d.fd),
                    Vec(d.fd_r, 0.0),     Matrix(d.n_classes, d.fd), Vec(d.n_classes, 0.0)};
}

std::array<std::span<double>, 6> Parameters::tensors() {
  return {w_g.flat(), std::span<double>(b_g), w_r.flat(), std::span<double>(b_r), w_h.flat(), std::span<double>(b_h)};
}

std::array<std::span<const double>, 6> Parameters::tensors() const {
  return {w_g.flat(), std::span<const double>(b_g), w_r.flat(), std::span<const double>(b_r),
          w_h.flat(), std::span<const double>(b_h)};
}

bool Parameters::all_finite() const {
  for (const auto t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

Vec softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - top);
    total += out[c];
  }
  for (double& v : out) v /= total;
  return out;
}

ToyModel::ToyModel(const ModelDims& dims, std::uint64_t seed)
    : dims_(dims), params_(Parameters::zeros(dims)), velocity_(Parameters::zeros(dims)), seed_(seed) {
  if (dims.d_in == 0 || dims.fd == 0 || dims.fd_r == 0 || dims.n_classes < 2) {
    throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive with at least two classes");
  }
  std::mt19937_64 rng(seed);
  const double bound_g = 1.0 / std::sqrt(static_cast<double>(dims.d_in));
  const double bound_f = 1.0 / std::sqrt(static_cast<double>(dims.fd));
  fill_uniform(params_.w_g.flat(), bound_g, rng);
  fill_uniform(params_.b_g, bound_g, rng);
  fill_uniform(params_.w_r.flat(), bound_f, rng);
  fill_uniform(params_.b_r, bound_f, rng);
  fill_uniform(params_.w_h.flat(), bound_f, rng);
  fill_uniform(params_.b_h, bound_f, rng);
}

ToyModel::ToyModel(const ModelDims& dims, Parameters params)
    : dims_(dims), params_(std::move(params)), velocity_(Parameters::zeros(dims)) {
  const auto ref = Parameters::zeros(dims).tensors();
  const auto got = params_.tensors();
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (ref[t].size() != got[t].size()) throw Error(ErrorCode::DimensionMismatch, "parameter shape mismatch");
  }
}

ForwardCache ToyModel::forward(std::span<const double> x) const {
  if (x.size() != dims_.d_in) {
    throw Error(ErrorCode::DimensionMismatch,
                "input has " + std::to_string(x.size()) + " entries, model expects " + std::to_string(dims_.d_in));
  }
  ForwardCache c;
  c.input.assign(x.begin(), x.end());
  c.feature.resize(dims_.fd);
  affine(params_.w_g, params_.b_g, x, c.feature);
  for (double& v : c.feature) v = std::tanh(v);
  c.reduced.resize(dims_.fd_r);
  affine(params_.w_r, params_.b_r, c.feature, c.reduced);
  c.logits.resize(dims_.n_classes);
  affine(params_.w_h, params_.b_h, c.feature, c.logits);
  c.softmax = softmax(c.logits);
  return c;
}

std::vector<ForwardCache> ToyModel::forward_batch(const Matrix& x) const {
  std::vector<ForwardCache> out;
  out.reserve(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(forward(x.row(i)));
  return out;
}

Gradients ToyModel::backward(std::span<const ForwardCache> caches, std::span<const OutputGrad> grads) const {
  if (caches.size() != grads.size()) {
    throw Error(ErrorCode::DimensionMismatch, "caches and upstream gradients must align");
  }
  Gradients g = Parameters::zeros(dims_);
  Vec d_feature(dims_.fd);
  Vec scratch_in(dims_.d_in);
  for (std::size_t i = 0; i < caches.size(); ++i) {
    const ForwardCache& c = caches[i];
    const OutputGrad& up = grads[i];
    if ((!up.d_reduced.empty() && up.d_reduced.size() != dims_.fd_r) ||
        (!up.d_logits.empty() && up.d_logits.size() != dims_.n_classes) || c.feature.size() != dims_.fd) {
      throw Error(ErrorCode::DimensionMismatch, "upstream gradient shape mismatch");
    }
    if (up.d_reduced.empty() && up.d_logits.empty()) continue;

    std::fill(d_feature.begin(), d_feature.end(), 0.0);
    if (!up.d_reduced.empty()) affine_backward(params_.w_r, c.feature, up.d_reduced, g.w_r, g.b_r, d_feature);
    if (!up.d_logits.empty()) affine_backward(params_.w_h, c.feature, up.d_logits, g.w_h, g.b_h, d_feature);

    // tanh' = 1 - tanh^2
    for (std::size_t k = 0; k < dims_.fd; ++k) d_feature[k] *= 1.0 - c.feature[k] * c.feature[k];
    affine_backward(params_.w_g, c.input, d_feature, g.w_g, g.b_g, scratch_in);
  }
  return g;
}

void ToyModel::sgd_step(const Gradients& grads, const OptimizerConfig& cfg) {
  if (!grads.all_finite()) throw Error(ErrorCode::NonFiniteGradient, "gradient contains non-finite values");
  auto w = params_.tensors();
  auto v = velocity_.tensors();
  const auto g = grads.tensors();
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (g[t].size() != w[t].size()) throw Error(ErrorCode::DimensionMismatch, "gradient shape mismatch");
    for (std::size_t k = 0; k < w[t].size(); ++k) {
      v[t][k] = cfg.momentum * v[t][k] + g[t][k];
      w[t][k] -= cfg.learning_rate * v[t][k];
    }
  }
}

nlohmann::ordered_json ToyModel::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "gmmuda.model";
  j["version"] = kCheckpointVersion;
  j["seed"] = seed_;
  j["dims"] = {{"d_in", dims_.d_in}, {"fd", dims_.fd}, {"fd_r", dims_.fd_r}, {"n_classes", dims_.n_classes}};
  j["params"] = params_json(params_);
  j["velocity"] = params_json(velocity_);
  return j;
}

ToyModel ToyModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gmmuda.model" || j.at("version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::Io, "not a version 1 model checkpoint");
    }
    const auto& jd = j.at("dims");
    ModelDims d{jd.at("d_in").get<std::size_t>(), jd.at("fd").get<std::size_t>(), jd.at("fd_r").get<std::size_t>(),
                jd.at("n_classes").get<std::size_t>()};
    ToyModel m(d, params_from_json(j.at("params"), d));
    m.velocity_ = params_from_json(j.at("velocity"), d);
    m.seed_ = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed model checkpoint: ") + e.what());
  }
}

}  // namespace gmmuda::model
