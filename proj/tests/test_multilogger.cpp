// Copyright 2026 The OPE Lab Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>

#include "opelab/multilogger.hpp"
#include "test_util.hpp"

namespace opelab {
namespace {

StratifiedEstimate with_sigma(std::initializer_list<double> s) {
  StratifiedEstimate est;
  est.sigma2 = Vector(static_cast<Index>(s.size()));
  est.d_values = Vector::Zero(est.sigma2.size());
  Index i = 0;
  for (double v : s) {
    est.sigma2(i++) = v;
    est.sizes.push_back(10);
  }
  return est;
}

TEST(Mixture, HandCases) {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  const auto m = mixture_propensity({{a, PolicyKind::Fixed, {}}, {b, PolicyKind::Fixed, {}}});
  EXPECT_EQ(m.probs, Eigen::RowVector2d(0.5, 0.5));
  const auto w = mixture_propensity({{a, PolicyKind::Fixed, {}}, {b, PolicyKind::Fixed, {}}}, {3, 1});
  EXPECT_EQ(w.probs, Eigen::RowVector2d(0.75, 0.25));
  EXPECT_EQ(mixture_propensity({{a, PolicyKind::Fixed, {}}, {a, PolicyKind::Fixed, {}}}).probs, a);
  EXPECT_THROW(mixture_propensity({{a, PolicyKind::Fixed, {}}, {Matrix::Ones(2, 2) / 2, PolicyKind::Fixed, {}}}),
               ShapeError);
}

TEST(Mixture, RowsStayOnSimplex) {
  Rng rng(2);
  std::vector<PolicyMatrix> ps;
  for (int m = 0; m < 4; ++m) ps.push_back({testing::random_simplex_rows(30, 5, rng), PolicyKind::Fixed, {}});
  EXPECT_NO_THROW(require_simplex_rows(mixture_propensity(ps, {1, 2, 3, 4}).probs, "mixture"));
}

TEST(Strata, SingleStratumIsCrossFitAipw) {
  const auto log = testing::random_log(60, 2, 3, 4);
  const auto est = stratum_estimates({log}, uniform_policy_fn(3), RidgeLearner{1.0}, 11);
  const PolicyMatrix u = uniform_policy(60, 3);
  const auto scores = aipw_crossfit(log, RidgeLearner{1.0}, 11);
  EXPECT_NEAR(est.d_values(0), inner_value(u, scores), 1e-12);
  EXPECT_NEAR(est.sigma2(0), empirical_variance(u, scores).empirical_variance, 1e-12);
}

TEST(Strata, IdenticalStrataAgreeAndSmallStrataFail) {
  const auto log = testing::random_log(40, 2, 3, 5);
  const auto est = stratum_estimates({log, log}, uniform_policy_fn(3), ZeroLearner{}, 1);
  EXPECT_EQ(est.d_values(0), est.d_values(1));
  EXPECT_NEAR(est.sigma2(0), 2.0 * empirical_variance(uniform_policy(40, 3), scores_ipw(log)).empirical_variance,
              1e-12);
  EXPECT_THROW(stratum_estimates({testing::random_log(3, 2, 3, 5)}, uniform_policy_fn(3), ZeroLearner{}, 1),
               DomainError);
}

TEST(Gmm, OptimalWeightHandCases) {
  auto r = gmm_combine(with_sigma({1, 1}));
  EXPECT_DOUBLE_EQ(r.weights(0), 0.5);
  EXPECT_DOUBLE_EQ(r.variance, 0.5);
  r = gmm_combine(with_sigma({1, 3}));
  EXPECT_DOUBLE_EQ(r.weights(0), 0.75);
  EXPECT_DOUBLE_EQ(r.variance, 0.75);
  auto one = with_sigma({2});
  one.d_values(0) = 0.3;
  r = gmm_combine(one);
  EXPECT_EQ(r.estimate, 0.3);
  EXPECT_EQ(r.variance, 2.0);
  EXPECT_THROW(gmm_combine(with_sigma({1, 1}), Vector(Eigen::Vector2d(0.7, 0.7))), DomainError);
}

TEST(Gmm, SizeWeightsAndMatrixWeights) {
  auto est = with_sigma({1, 1});
  est.sizes = {30, 10};
  EXPECT_EQ(size_proportional_weights(est), Eigen::Vector2d(0.75, 0.25));
  const Vector w = gmm_weights_from_matrix(Eigen::Matrix2d(Eigen::Vector2d(1.0, 3.0).asDiagonal()));
  EXPECT_DOUBLE_EQ(w(0), 0.25);
}

TEST(Gmm, OptimalWeightsMinimizeOverSimplex) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = 2 + rng.index(4);
    StratifiedEstimate est;
    est.sigma2 = Vector(m);
    est.d_values = Vector::Zero(m);
    for (Index i = 0; i < m; ++i) {
      est.sigma2(i) = rng.uniform(0.1, 10.0);
      est.sizes.push_back(5);
    }
    const double best = gmm_combine(est).variance;
    EXPECT_NEAR(best, var_ss(est), 1e-12);
    for (int s = 0; s < 100; ++s) {
      const Vector w = testing::random_simplex(m, rng);
      EXPECT_LE(best, gmm_combine(est, w).variance + 1e-12);
    }
  }
}

TEST(VarSs, HandCasesAndGridOracle) {
  EXPECT_DOUBLE_EQ(var_ss(with_sigma({2, 2})), 1.0);
  EXPECT_NEAR(var_ss(with_sigma({1, 1e9})), 1.0, 1e-8);
  EXPECT_THROW(var_ss(with_sigma({1, 0})), DomainError);
  const auto est = with_sigma({0.7, 2.9});
  double best = 1e300;
  for (int i = 0; i <= 1000000; ++i) {
    const double w = i / 1e6;
    best = std::min(best, w * w * 0.7 + (1 - w) * (1 - w) * 2.9);
  }
  EXPECT_NEAR(best, var_ss(est), 1e-6);
}

TEST(VarMs, SingleLoggerAndIntegrand) {
  Rng rng(4);
  const Index T = 40, K = 3;
  GroundTruth truth{Matrix(T, K), Matrix(T, K)};
  for (Index i = 0; i < truth.f_star.size(); ++i) {
    truth.f_star.data()[i] = rng.uniform();
    truth.nu_star.data()[i] = rng.uniform(0.0, 0.25);
  }
  const PolicyMatrix b{testing::random_simplex_rows(T, K, rng, 0.05), PolicyKind::Fixed, {}};
  const PolicyMatrix b2{testing::random_simplex_rows(T, K, rng, 0.05), PolicyKind::Fixed, {}};
  const PolicyMatrix e{testing::random_simplex_rows(T, K, rng), PolicyKind::Fixed, {}};
  EXPECT_EQ(var_ms(truth, mixture_propensity({b}), e), semiparametric_bound(truth, b, e));
  const PolicyMatrix mix = mixture_propensity({b, b2});
  double theta = 0.0;
  for (Index t = 0; t < T; ++t) theta += e.probs.row(t).dot(truth.f_star.row(t));
  theta /= T;
  double total = 0.0;
  for (Index t = 0; t < T; ++t) {
    double s = 0.0;
    for (Index a = 0; a < K; ++a) s += e.probs(t, a) * e.probs(t, a) * truth.nu_star(t, a) / mix.probs(t, a);
    const double dev = e.probs.row(t).dot(truth.f_star.row(t)) - theta;
    total += s + dev * dev;
  }
  EXPECT_NEAR(var_ms(truth, mix, e), total / T, 1e-12);
}

TEST(VarMs, IdenticalLoggersGiveEqualVariances) {
  Rng rng(5);
  const Index T = 50, K = 3;
  GroundTruth truth{Matrix::Constant(T, K, 0.4), Matrix::Constant(T, K, 0.24)};
  const PolicyMatrix b{testing::random_simplex_rows(T, K, rng, 0.05), PolicyKind::Fixed, {}};
  const PolicyMatrix e = uniform_policy(T, K);
  const auto ss = population_stratified_variances(truth, {b, b}, e, {100, 100});
  EXPECT_NEAR(var_ss(ss), var_ms(truth, mixture_propensity({b, b}), e), 1e-12);
}

TEST(GmmExperiment, RowsAndDeterminism) {
  GmmExperimentConfig cfg;
  cfg.size_a = 200;
  cfg.size_b = 200;
  cfg.reps = 6;
  cfg.truth_sample = 5000;
  const auto rows = gmm_experiment(cfg);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].name, "AIPW_A");
  EXPECT_EQ(rows[3].name, "GMM");
  const auto again = gmm_experiment(cfg);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].rmse, again[i].rmse);
    EXPECT_GE(rows[i].rmse, 0.0);
  }
  cfg.size_a = 3;
  EXPECT_THROW(gmm_experiment(cfg), DomainError);
}

}  // namespace
}  // namespace opelab
