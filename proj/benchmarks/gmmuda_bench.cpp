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
#include <benchmark/benchmark.h>

#include <random>

#include "gmmuda/gmm_stream.hpp"
#include "gmmuda/objectives.hpp"
#include "gmmuda/ood_gate.hpp"
#include "gmmuda/toy_model.hpp"

using namespace gmmuda;
using linalg::Matrix;
using linalg::Vec;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = n01(rng);
  return m;
}

Matrix softmax_weights(std::size_t rows, std::size_t classes, std::uint64_t seed) {
  Matrix z = random_matrix(rows, classes, seed);
  for (std::size_t i = 0; i < rows; ++i) {
    const Vec q = model::softmax(z.row(i));
    std::copy(q.begin(), q.end(), z.row(i).begin());
  }
  return z;
}

std::vector<ood::PseudoLabel> mixed_labels(std::size_t n, std::size_t classes) {
  std::vector<ood::PseudoLabel> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (i % 4) {
      case 0:
      case 1: out[i] = ood::PseudoLabel::known(i % classes); break;
      case 2: out[i] = ood::PseudoLabel::unknown(); break;
      default: out[i] = ood::PseudoLabel::discarded();
    }
  }
  return out;
}

}  // namespace

// One batch folded into the mixture; range(0) is the reduced feature width.
static void BM_GmmUpdate(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const std::size_t classes = 9, nb = 64;
  const Matrix feats = random_matrix(nb, dim, 1);
  const Matrix w = softmax_weights(nb, classes, 2);
  gmm::GmmState g(classes, dim);
  for (auto _ : state) {
    g.update(feats, w);
    benchmark::DoNotOptimize(g.mode(0).mean.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * nb));
}
BENCHMARK(BM_GmmUpdate)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

static void BM_ClassLogLikelihoods(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const std::size_t classes = 9;
  gmm::GmmState g(classes, dim);
  g.update(random_matrix(256, dim, 3), softmax_weights(256, classes, 4));
  const Matrix probe = random_matrix(1, dim, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(g.class_log_likelihoods(probe.row(0)));
  }
}
BENCHMARK(BM_ClassLogLikelihoods)->Arg(16)->Arg(64)->Arg(128);

static void BM_NormalizedEntropy(benchmark::State& state) {
  const Matrix p = softmax_weights(1, static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(ood::normalized_entropy(p.row(0)));
}
BENCHMARK(BM_NormalizedEntropy)->Arg(9)->Arg(345);

// Contrastive loss over originals plus views (2 N_b rows).
static void BM_ContrastiveLoss(benchmark::State& state) {
  const auto nb = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 64, classes = 9;
  const Matrix r = random_matrix(2 * nb, dim, 7);
  const auto labels = mixed_labels(2 * nb, classes);
  std::vector<Vec> protos;
  const Matrix p = random_matrix(classes, dim, 8);
  for (std::size_t c = 0; c < classes; ++c) protos.emplace_back(p.row(c).begin(), p.row(c).end());
  for (auto _ : state) benchmark::DoNotOptimize(objectives::contrastive_loss(r, labels, protos).loss);
}
BENCHMARK(BM_ContrastiveLoss)->Arg(16)->Arg(64)->Arg(128);

static void BM_KldLoss(benchmark::State& state) {
  const Matrix q = softmax_weights(64, 9, 9);
  const auto labels = mixed_labels(64, 9);
  for (auto _ : state) benchmark::DoNotOptimize(objectives::kld_loss(q, labels).loss);
}
BENCHMARK(BM_KldLoss);

static void BM_ForwardBatch(benchmark::State& state) {
  const model::ToyModel m(model::ModelDims{}, 10);
  const Matrix x = random_matrix(static_cast<std::size_t>(state.range(0)), 20, 11);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward_batch(x));
}
BENCHMARK(BM_ForwardBatch)->Arg(64)->Arg(128);

static void BM_BackwardBatch(benchmark::State& state) {
  const model::ToyModel m(model::ModelDims{}, 12);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto caches = m.forward_batch(random_matrix(n, 20, 13));
  const Matrix dr = random_matrix(n, 64, 14);
  const Matrix dz = random_matrix(n, 9, 15);
  std::vector<model::OutputGrad> up(n);
  for (std::size_t i = 0; i < n; ++i) {
    up[i].d_reduced.assign(dr.row(i).begin(), dr.row(i).end());
    up[i].d_logits.assign(dz.row(i).begin(), dz.row(i).end());
  }
  for (auto _ : state) benchmark::DoNotOptimize(m.backward(caches, up));
}
BENCHMARK(BM_BackwardBatch)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
