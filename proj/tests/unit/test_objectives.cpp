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
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gmmuda/error.hpp"
#include "gmmuda/objectives.hpp"
#include "gmmuda/toy_model.hpp"
#include "oracles.hpp"

namespace gmmuda::objectives {
namespace {

using ood::PseudoLabel;

const model::ModelDims kSmall{5, 8, 4, 3};

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const Vec q = model::softmax(logits.row(i));
    std::copy(q.begin(), q.end(), out.row(i).begin());
  }
  return out;
}

// Central differences of a loss over a matrix input.
double max_rel_error(Matrix x, const std::function<double(const Matrix&)>& f, const Matrix& analytic) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < x.flat().size(); ++k) {
    const double saved = x.flat()[k];
    x.flat()[k] = saved + h;
    const double up = f(x);
    x.flat()[k] = saved - h;
    const double down = f(x);
    x.flat()[k] = saved;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic.flat()[k];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
  }
  return worst;
}

TEST(ContrastiveTest, MatchesBruteForce) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 4 + rep % 9, dim = 2 + rep % 5, classes = 3;
    const Matrix r = oracle::random_matrix(n, dim, rng);
    const auto labels = oracle::random_labels(n, classes, rng);
    std::vector<Vec> protos;
    for (std::size_t c = 0; c < classes; ++c) {
      const Matrix p = oracle::random_matrix(1, dim, rng);
      protos.emplace_back(p.flat().begin(), p.flat().end());
    }
    const double tau = rep % 2 ? 0.1 : 0.5;
    const auto res = contrastive_loss(r, labels, protos, {tau, false});
    EXPECT_NEAR(res.loss, oracle::contrastive_brute_force(r, labels, protos, tau), 1e-10 * std::max(1.0, res.loss));
  }
}

TEST(ContrastiveTest, IdenticalFeaturesAndPrototype) {
  Matrix r(2, 2);
  r(0, 0) = r(1, 0) = 1.0;
  const std::vector<PseudoLabel> labels{PseudoLabel::known(0), PseudoLabel::known(0)};
  const std::vector<Vec> protos{Vec{3.0, 0.0}};
  const auto res = contrastive_loss(r, labels, protos, {0.1, false});
  // Pair terms: one candidate each, so log 1 = 0. Prototype terms: two equal entries, log 2.
  EXPECT_NEAR(res.loss, 2.0 * std::log(2.0) / 4.0, 1e-12);
  EXPECT_EQ(res.n_terms, 4u);
}

TEST(ContrastiveTest, NoKnownSamples) {
  std::mt19937_64 rng(1);
  const Matrix r = oracle::random_matrix(4, 3, rng);
  const std::vector<PseudoLabel> labels{PseudoLabel::unknown(), PseudoLabel::discarded(), PseudoLabel::unknown(),
                                        PseudoLabel::unknown()};
  const std::vector<Vec> protos{Vec(3, 1.0)};
  const auto res = contrastive_loss(r, labels, protos);
  EXPECT_EQ(res.loss, 0.0);
  EXPECT_EQ(res.n_terms, 0u);
  for (double g : res.grads.flat()) EXPECT_EQ(g, 0.0);
}

TEST(ContrastiveTest, HighTemperatureLimit) {
  // Orthogonal one-hot features, two known classes, one sample each. Only prototype terms
  // exist and each tends to log(number of denominator entries) = log 2.
  Matrix r(2, 2);
  r(0, 0) = 1.0;
  r(1, 1) = 1.0;
  const std::vector<PseudoLabel> labels{PseudoLabel::known(0), PseudoLabel::known(1)};
  const std::vector<Vec> protos{Vec{1.0, 0.0}, Vec{0.0, 1.0}};
  const auto res = contrastive_loss(r, labels, protos, {1e3, false});
  EXPECT_NEAR(res.loss, std::log(2.0), 1e-3);
}

TEST(ContrastiveTest, ScaleInvariant) {
  std::mt19937_64 rng(12);
  const Matrix r = oracle::random_matrix(10, 4, rng);
  const auto labels = oracle::random_labels(10, 3, rng);
  const std::vector<Vec> protos{Vec{1, 0, 0, 0}, Vec{0, 1, 0, 0}, Vec{0, 0, 1, 1}};
  const double base = contrastive_loss(r, labels, protos).loss;
  for (double s : {1e-3, 0.5, 7.0, 1e4}) {
    Matrix scaled = r;
    for (double& v : scaled.flat()) v *= s;
    EXPECT_NEAR(contrastive_loss(scaled, labels, protos).loss, base, 1e-9);
  }
}

TEST(ContrastiveTest, UnknownPairsToggle) {
  Matrix r(3, 2);
  r(0, 0) = 1.0;
  r(1, 0) = 1.0;
  r(1, 1) = 0.2;
  r(2, 1) = 1.0;
  const std::vector<PseudoLabel> labels{PseudoLabel::known(0), PseudoLabel::unknown(), PseudoLabel::unknown()};
  const std::vector<Vec> protos{Vec{1.0, 0.0}};
  const auto off = contrastive_loss(r, labels, protos, {0.1, false});
  const auto on = contrastive_loss(r, labels, protos, {0.1, true});
  EXPECT_EQ(off.n_terms, 1u);
  EXPECT_EQ(on.n_terms, 3u);
}

TEST(ContrastiveTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix r = oracle::random_matrix(8, 4, rng);
    const auto labels = oracle::random_labels(8, 3, rng);
    std::vector<Vec> protos;
    for (int c = 0; c < 3; ++c) {
      const Matrix p = oracle::random_matrix(1, 4, rng);
      protos.emplace_back(p.flat().begin(), p.flat().end());
    }
    const ContrastiveOptions opts{0.5, rep % 2 == 1};
    const auto res = contrastive_loss(r, labels, protos, opts);
    const double err = max_rel_error(
        r, [&](const Matrix& m) { return contrastive_loss(m, labels, protos, opts).loss; }, res.grads);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(ContrastiveTest, RejectsBadInput) {
  const Matrix r(2, 2, 1.0);
  const std::vector<Vec> protos{Vec{1.0, 0.0}};
  EXPECT_THROW(contrastive_loss(r, std::vector<PseudoLabel>(3), protos), Error);
  EXPECT_THROW(contrastive_loss(r, std::vector<PseudoLabel>(2), protos, {0.0, false}), Error);
}

TEST(KldTest, Examples) {
  Matrix q(1, 4, 0.25);
  EXPECT_EQ(kld_loss(q, std::vector{PseudoLabel::unknown()}).loss, 0.0);
  q(0, 0) = 0.7;
  q(0, 1) = q(0, 2) = q(0, 3) = 0.1;
  EXPECT_NEAR(kld_loss(q, std::vector{PseudoLabel::unknown()}).loss, 0.429813, 1e-6);
  EXPECT_NEAR(kld_loss(q, std::vector{PseudoLabel::known(0)}).loss, -0.429813, 1e-6);
  EXPECT_NEAR(kl_divergence(Vec(4, 0.25), q.row(0)), oracle::kl_uniform(q.row(0)), 1e-15);
}

TEST(KldTest, AllDiscardedIsExactlyZero) {
  std::mt19937_64 rng(2);
  const Matrix q = softmax_rows(oracle::random_matrix(5, 3, rng));
  const auto res = kld_loss(q, std::vector<PseudoLabel>(5, PseudoLabel::discarded()));
  EXPECT_EQ(res.loss, 0.0);
  for (double g : res.grads.flat()) EXPECT_EQ(g, 0.0);
}

TEST(KldTest, BatchMeanOverAllRows) {
  Matrix q(4, 2, 0.5);
  q(0, 0) = 0.9;
  q(0, 1) = 0.1;
  const std::vector labels{PseudoLabel::unknown(), PseudoLabel::discarded(), PseudoLabel::discarded(),
                           PseudoLabel::discarded()};
  const double one = kld_loss(q, labels).loss;
  EXPECT_NEAR(one, oracle::kl_uniform(q.row(0)) / 4.0, 1e-15);
}

TEST(KldTest, GradientsMatchFiniteDifferencesOnLogits) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix z = oracle::random_matrix(6, 3, rng, 2.0);
    const auto labels = oracle::random_labels(6, 3, rng);
    const auto res = kld_loss(softmax_rows(z), labels);
    EXPECT_LT(max_rel_error(z, [&](const Matrix& m) { return kld_loss(softmax_rows(m), labels).loss; }, res.grads),
              1e-4);
  }
}

TEST(KldTest, EntropyTrendsUnderDescent) {
  for (bool unknown : {true, false}) {
    Vec z{1.5, -0.3, 0.2, 0.0};
    const std::vector labels{unknown ? PseudoLabel::unknown() : PseudoLabel::known(0)};
    double prev = oracle::shannon_normalized(model::softmax(z));
    for (int step = 0; step < 100; ++step) {
      Matrix q(1, 4);
      const Vec s = model::softmax(z);
      std::copy(s.begin(), s.end(), q.row(0).begin());
      const auto res = kld_loss(q, labels);
      for (std::size_t c = 0; c < 4; ++c) z[c] -= 0.1 * res.grads(0, c);
      const double h = oracle::shannon_normalized(model::softmax(z));
      if (unknown) {
        ASSERT_GT(h, prev) << "step " << step;
      } else {
        ASSERT_LT(h, prev) << "step " << step;
      }
      prev = h;
    }
  }
}

TEST(CrossEntropyTest, ValueAndGradient) {
  std::mt19937_64 rng(7);
  const Matrix z = oracle::random_matrix(5, 4, rng);
  const std::vector<std::size_t> y{0, 3, 1, 1, 2};
  const auto res = cross_entropy_loss(softmax_rows(z), y);
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) expected -= std::log(model::softmax(z.row(i))[y[i]]) / 5.0;
  EXPECT_NEAR(res.loss, expected, 1e-14);
  EXPECT_LT(max_rel_error(z, [&](const Matrix& m) { return cross_entropy_loss(softmax_rows(m), y).loss; }, res.grads),
            1e-4);
  EXPECT_THROW(cross_entropy_loss(softmax_rows(z), std::vector<std::size_t>{0, 0, 0, 0, 9}), Error);
}

TEST(CombinedTest, Arithmetic) {
  LossResult c, k;
  c.loss = 0.5;
  k.loss = 0.25;
  EXPECT_EQ(combined_loss(c, k, 1.0).total, 0.75);
  EXPECT_EQ(combined_loss(c, k, 0.0).total, 0.5);
  c.loss = 0.0;
  EXPECT_EQ(combined_loss(c, k, 1.0).total, 0.25);
  EXPECT_THROW(combined_loss(c, k, -1.0), Error);
}

// Losses through the whole model, against parameter-space finite differences.
class ModelGradientTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng{77};
  model::ToyModel m{kSmall, 19};
  Matrix x = oracle::random_matrix(6, kSmall.d_in, rng);
  std::vector<PseudoLabel> labels = oracle::random_labels(6, kSmall.n_classes, rng);
  std::vector<Vec> protos{Vec{0.3, -0.2, 0.5, 0.1}, Vec{-0.4, 0.2, 0.0, 0.3}, Vec{0.1, 0.1, -0.6, 0.2}};
};

TEST_F(ModelGradientTest, Contrastive) {
  const auto objective = [&](const std::vector<model::ForwardCache>& caches) {
    Matrix r(caches.size(), kSmall.fd_r);
    for (std::size_t i = 0; i < caches.size(); ++i) std::copy(caches[i].reduced.begin(), caches[i].reduced.end(), r.row(i).begin());
    const auto res = contrastive_loss(r, labels, protos, {0.5, false});
    oracle::ModelLoss out{res.loss, std::vector<model::OutputGrad>(caches.size())};
    for (std::size_t i = 0; i < caches.size(); ++i) out.grads[i].d_reduced.assign(res.grads.row(i).begin(), res.grads.row(i).end());
    return out;
  };
  EXPECT_LT(oracle::check_model_gradients(m, x, objective).max_rel_err, 1e-4);
}

TEST_F(ModelGradientTest, Combined) {
  const auto objective = [&](const std::vector<model::ForwardCache>& caches) {
    Matrix r(caches.size(), kSmall.fd_r), q(caches.size(), kSmall.n_classes);
    for (std::size_t i = 0; i < caches.size(); ++i) {
      std::copy(caches[i].reduced.begin(), caches[i].reduced.end(), r.row(i).begin());
      std::copy(caches[i].softmax.begin(), caches[i].softmax.end(), q.row(i).begin());
    }
    const auto c = combined_loss(contrastive_loss(r, labels, protos, {0.5, false}), kld_loss(q, labels), 0.7);
    oracle::ModelLoss out{c.total, std::vector<model::OutputGrad>(caches.size())};
    for (std::size_t i = 0; i < caches.size(); ++i) {
      out.grads[i].d_reduced.assign(c.reduced_grads.row(i).begin(), c.reduced_grads.row(i).end());
      out.grads[i].d_logits.assign(c.logit_grads.row(i).begin(), c.logit_grads.row(i).end());
    }
    return out;
  };
  EXPECT_LT(oracle::check_model_gradients(m, x, objective).max_rel_err, 1e-4);
}

}  // namespace
}  // namespace gmmuda::objectives
