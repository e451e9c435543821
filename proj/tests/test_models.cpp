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

#include "opelab/models.hpp"
#include "opelab/rng.hpp"
#include "test_util.hpp"

namespace opelab {
namespace {

// Penalized least squares on [1, x] solved by full-pivot LU; the intercept
// penalty is optional.
Vector ridge_oracle(const Matrix& x, const Vector& y, double lambda, bool penalize_intercept) {
  Matrix phi(x.rows(), x.cols() + 1);
  phi.col(0).setOnes();
  phi.rightCols(x.cols()) = x;
  Matrix a = phi.transpose() * phi;
  for (Index j = 0; j < a.rows(); ++j) {
    if (j > 0 || penalize_intercept) a(j, j) += lambda;
  }
  return a.fullPivLu().solve(phi.transpose() * y);
}

double ridge_objective(const Matrix& x, const Vector& y, const Vector& w, double lambda) {
  Vector r = y.array() - w(0);
  r -= x * w.tail(x.cols());
  return r.squaredNorm() + lambda * w.tail(x.cols()).squaredNorm();
}

TEST(Ridge, RecoversNoiselessLine) {
  Matrix x(5, 1);
  x << 0, 1, 2, 3, 4;
  const Vector y = 2.0 * x.col(0);
  const auto m = fit_ridge(x, {0, 0, 0, 0, 0}, y, 1, 1e-8);
  EXPECT_NEAR(m.weights(0, 1), 2.0, 1e-6);
  EXPECT_NEAR(m.weights(0, 0), 0.0, 1e-6);
}

TEST(Ridge, InfiniteShrinkageGivesMean) {
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  Vector y(4);
  y << 3, 1, 4, 1;
  const auto m = fit_ridge(x, {0, 0, 0, 0}, y, 1, 1e8);
  EXPECT_NEAR(m.weights(0, 1), 0.0, 1e-6);
  EXPECT_NEAR(m.weights(0, 0), y.mean(), 1e-6);
}

TEST(Ridge, MatchesClosedFormOracle) {
  Matrix x(2, 1);
  x << 1, 2;
  Vector y(2);
  y << 1, 2;
  const auto m = fit_ridge(x, {0, 0}, y, 1, 1.0);
  const Vector w = ridge_oracle(x, y, 1.0, false);
  EXPECT_NEAR(m.weights(0, 0), w(0), 1e-12);
  EXPECT_NEAR(m.weights(0, 1), w(1), 1e-12);
  EXPECT_NEAR(w(1), 1.0 / 3.0, 1e-12);
}

TEST(Ridge, PerActionFitsMatchOracleOnRandomData) {
  const auto log = testing::random_log(200, 3, 3, 5);
  for (bool penalize : {false, true}) {
    RidgeOptions opts;
    opts.penalize_intercept = penalize;
    const auto m = fit_ridge(log.covariates, log.actions, log.rewards, 3, 0.7, opts);
    for (int a = 0; a < 3; ++a) {
      std::vector<Index> rows;
      for (Index t = 0; t < log.size(); ++t) {
        if (log.actions[static_cast<std::size_t>(t)] == a) rows.push_back(t);
      }
      Vector ya(static_cast<Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) ya(static_cast<Index>(i)) = log.rewards(rows[i]);
      const Vector w = ridge_oracle(take_rows(log.covariates, rows), ya, 0.7, penalize);
      EXPECT_LT((m.weights.row(a).transpose() - w).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Ridge, AbsentActionUsesGlobalMean) {
  Matrix x(3, 1);
  x << 1, 2, 3;
  Vector y(3);
  y << 1, 2, 6;
  const auto m = fit_ridge(x, {0, 0, 0}, y, 2, 1.0);
  EXPECT_DOUBLE_EQ(m.weights(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(m.weights(1, 1), 0.0);
  EXPECT_THROW(fit_ridge(Matrix(0, 1), {}, Vector(0), 1, 1.0), ShapeError);
}

TEST(Ridge, ObjectiveNotAboveZeroWeights) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto log = testing::random_log(40, 2, 1, 100 + trial);
    const double lambda = rng.uniform(0.01, 10.0);
    const auto m = fit_ridge(log.covariates, log.actions, log.rewards, 1, lambda);
    const Vector w = m.weights.row(0).transpose();
    EXPECT_LE(ridge_objective(log.covariates, log.rewards, w, lambda),
              ridge_objective(log.covariates, log.rewards, Vector::Zero(3), lambda) + 1e-9);
  }
}

TEST(KernelRidge, KernelOnDiagonalIsOne) {
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    Vector x(3);
    for (Index j = 0; j < 3; ++j) x(j) = rng.normal(0.0, 10.0);
    EXPECT_DOUBLE_EQ(rbf_kernel(x, x, 0.7), 1.0);
  }
}

TEST(KernelRidge, InterpolatesWithTinyRidge) {
  Matrix x(4, 1);
  x << 0, 1, 2, 3;
  Vector y(4);
  y << 1, -1, 0.5, 2;
  const auto m = fit_kernel_ridge(x, {0, 0, 0, 0}, y, 1, 1.0, 1e-10);
  const Matrix p = m.predict(x);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(p(i, 0), y(i), 1e-4);
}

TEST(KernelRidge, MatchesDenseSolveOracle) {
  Matrix x(3, 1);
  x << -1, 0.5, 2;
  Vector y(3);
  y << 0.3, 1.7, -0.4;
  const double gamma = 1.0, lambda = 0.1;
  Matrix g(3, 3);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) g(i, j) = std::exp(-gamma * (x(i, 0) - x(j, 0)) * (x(i, 0) - x(j, 0)));
  }
  const Vector dual = (g + lambda * Matrix::Identity(3, 3)).fullPivLu().solve(y);
  Matrix q(4, 1);
  q << -2, 0, 0.5, 3;
  const auto m = fit_kernel_ridge(x, {0, 0, 0}, y, 1, gamma, lambda);
  const Matrix p = m.predict(q);
  for (Index i = 0; i < q.rows(); ++i) {
    double oracle = 0.0;
    for (Index j = 0; j < 3; ++j) oracle += dual(j) * std::exp(-gamma * std::pow(q(i, 0) - x(j, 0), 2));
    EXPECT_NEAR(p(i, 0), oracle, 1e-9);
  }
  EXPECT_EQ(m.components[0].dual.size(), m.components[0].support.rows());
}

TEST(KernelRidge, RejectsNonpositiveParameters) {
  Matrix x = Matrix::Zero(2, 1);
  EXPECT_THROW(fit_kernel_ridge(x, {0, 0}, Vector::Ones(2), 1, 1.0, 0.0), DomainError);
  EXPECT_THROW(fit_kernel_ridge(x, {0, 0}, Vector::Ones(2), 1, 0.0, 1.0), DomainError);
}

TEST(KernelRidge, ObjectiveNotAboveZeroDual) {
  const auto log = testing::random_log(30, 2, 1, 77);
  const double gamma = 0.5, lambda = 0.3;
  const auto m = fit_kernel_ridge(log.covariates, log.actions, log.rewards, 1, gamma, lambda);
  const Matrix g = rbf_gram(log.covariates, log.covariates, gamma);
  const Vector& a = m.components[0].dual;
  const double at_fit = (log.rewards - g * a).squaredNorm() + lambda * a.dot(g * a);
  EXPECT_LE(at_fit, log.rewards.squaredNorm() + 1e-12);
}

// Plain gradient descent on the same penalized objective.
Matrix logistic_reference_probs(const Matrix& phi, const std::vector<int>& labels, int k, double l2) {
  Matrix targets = Matrix::Zero(phi.rows(), k);
  for (std::size_t i = 0; i < labels.size(); ++i) targets(static_cast<Index>(i), labels[i]) = 1.0;
  Matrix w = Matrix::Zero(phi.cols(), k);
  for (int it = 0; it < 200000; ++it) {
    const Matrix p = softmax_rows(phi * w);
    Matrix grad = phi.transpose() * (p - targets) / static_cast<double>(phi.rows());
    grad.bottomRows(w.rows() - 1) += l2 * w.bottomRows(w.rows() - 1);
    if (grad.norm() < 1e-9) break;
    w -= 0.5 * grad;
  }
  return softmax_rows(phi * w);
}

TEST(Logistic, SeparableClassesAreConfident) {
  Matrix x(8, 1);
  x << -2, -1.5, -1, -0.5, 0.5, 1, 1.5, 2;
  const std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1};
  const auto m = fit_logistic_policy(x, labels, 2, {}, 0.01);
  const Matrix p = m.predict_proba(x);
  for (Index i = 0; i < 8; ++i) EXPECT_GT(p(i, labels[static_cast<std::size_t>(i)]), 0.85);
  Matrix phi(8, 2);
  phi.col(0).setOnes();
  phi.col(1) = x;
  const Matrix ref = logistic_reference_probs(phi, labels, 2, 0.01);
  EXPECT_LT((p - ref).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LE(m.gradient_norm, 1e-6);
}

TEST(Logistic, MatchesReferenceOnNoisyThreeClassData) {
  Rng rng(31);
  Matrix x(60, 2);
  std::vector<int> labels;
  for (Index i = 0; i < 60; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    labels.push_back(rng.categorical(softmax_rows(Eigen::RowVector3d(x(i, 0), x(i, 1), 0.0)).row(0)));
  }
  const auto m = fit_logistic_policy(x, labels, 3, {}, 0.1);
  Matrix phi(60, 3);
  phi.col(0).setOnes();
  phi.rightCols(2) = x;
  EXPECT_LT((m.predict_proba(x) - logistic_reference_probs(phi, labels, 3, 0.1)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Logistic, ZeroFeaturesGiveClassFrequencies) {
  const Matrix x = Matrix::Zero(6, 2);
  const auto m = fit_logistic_policy(x, {0, 1, 2, 0, 1, 2}, 3, {}, 1.0);
  const Matrix p = m.predict_proba(x);
  for (Index i = 0; i < 6; ++i) {
    for (Index a = 0; a < 3; ++a) EXPECT_NEAR(p(i, a), 1.0 / 3.0, 1e-9);
  }
  const auto skewed = fit_logistic_policy(x, {0, 0, 0, 1, 1, 2}, 3, {}, 1.0);
  EXPECT_NEAR(skewed.predict_proba(x)(0, 0), 0.5, 1e-9);
}

TEST(Logistic, RowsAreSimplexForEveryFeatureMap) {
  Rng rng(2);
  Matrix x(50, 4);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<int> labels;
  for (Index i = 0; i < 50; ++i) labels.push_back(static_cast<int>(i % 3));
  for (auto kind : {FeatureMapKind::Linear, FeatureMapKind::Poly2, FeatureMapKind::RbfRandom}) {
    FeatureMapSpec spec;
    spec.kind = kind;
    spec.count = 30;
    spec.seed = 9;
    const auto m = fit_logistic_policy(x, labels, 4, spec, 0.05);
    const Matrix p = m.predict_proba(x * 3.0);
    EXPECT_NO_THROW(require_simplex_rows(p, "probs"));
    EXPECT_TRUE((p.col(3).array() == 0.0).all());
  }
}

TEST(Logistic, SingleClassIsAnError) {
  EXPECT_THROW(fit_logistic_policy(Matrix::Zero(3, 1), {1, 1, 1}, 2, {}, 1.0), DomainError);
}

TEST(FeatureMaps, Poly2CapAndLayout) {
  EXPECT_THROW(make_feature_map({FeatureMapKind::Poly2, 0, 0.0, 0}, 51), DomainError);
  const auto m = make_feature_map({FeatureMapKind::Poly2, 0, 0.0, 0}, 2);
  Matrix x(1, 2);
  x << 2, 3;
  Eigen::RowVectorXd expected(6);
  expected << 1, 2, 3, 4, 6, 9;
  EXPECT_EQ(m.transform(x), expected);
}

TEST(FeatureMaps, RandomFeaturesApproximateKernelAndAreSeeded) {
  FeatureMapSpec spec{FeatureMapKind::RbfRandom, 20000, 0.3, 5};
  const auto a = make_feature_map(spec, 3);
  const auto b = make_feature_map(spec, 3);
  EXPECT_EQ(a.omega, b.omega);
  Matrix x(2, 3);
  x << 0.1, -0.4, 0.3, 0.5, 0.2, -0.2;
  const Matrix z = a.transform(x).rightCols(20000);
  EXPECT_NEAR(z.row(0).dot(z.row(1)), rbf_kernel(x.row(0), x.row(1), 0.3), 0.03);
}

TEST(CrossValidation, SinglePointGrid) {
  CVGrid grid{{0.5}, {2.0}, 2};
  const auto r = cross_validate(grid, 10, 1, [](const HyperParams&, const auto&, const auto&) { return 1.0; });
  EXPECT_EQ(r.best.lambda, 0.5);
  EXPECT_EQ(r.best.gamma, 2.0);
}

TEST(CrossValidation, TiesGoToSmallestLambdaThenGamma) {
  CVGrid grid{{1.0, 0.1, 0.01}, {1.0, 0.01}, 2};
  const auto r = cross_validate(grid, 10, 1, [](const HyperParams&, const auto&, const auto&) { return 3.0; });
  EXPECT_EQ(r.best.lambda, 0.01);
  EXPECT_EQ(r.best.gamma, 0.01);
}

TEST(CrossValidation, NoiselessRidgePicksSmallestLambda) {
  Rng rng(3);
  Matrix x(40, 2);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const Vector y = 1.5 * x.col(0) - 0.5 * x.col(1);
  const std::vector<int> actions(40, 0);
  const auto r = cv_ridge(x, actions, y, 1, CVGrid{}, 4);
  EXPECT_EQ(r.best.lambda, 0.01);
  // Oracle: recompute the mean held-out loss of every grid point.
  const auto folds = make_folds(40, 2, 4);
  for (const auto& [hp, loss] : r.losses) {
    double total = 0.0;
    for (int f = 0; f < 2; ++f) {
      const auto& test = folds[static_cast<std::size_t>(f)];
      const auto& train = folds[static_cast<std::size_t>(1 - f)];
      Vector ytr(static_cast<Index>(train.size()));
      for (std::size_t i = 0; i < train.size(); ++i) ytr(static_cast<Index>(i)) = y(train[i]);
      const Vector w = ridge_oracle(take_rows(x, train), ytr, hp.lambda, false);
      double l = 0.0;
      for (auto t : test) l += std::pow(y(t) - w(0) - x.row(t).dot(w.tail(2)), 2);
      total += l / static_cast<double>(test.size());
    }
    EXPECT_NEAR(loss, total / 2.0, 1e-10);
  }
}

TEST(CrossValidation, TooFewRows) {
  EXPECT_THROW(cross_validate(CVGrid{}, 3, 1, [](const HyperParams&, const auto&, const auto&) { return 0.0; }),
               DomainError);
}

TEST(OnlineRidge, PriorPredictsZero) {
  OnlineRidge r(3, 2, 1.0);
  Matrix x(2, 3);
  x << 1, 2, 3, -1, 0, 4;
  EXPECT_EQ(r.predict(x), Matrix::Zero(2, 2));
}

TEST(OnlineRidge, SequentialEqualsBatch) {
  const auto log = testing::random_log(50, 3, 2, 8);
  OnlineRidge r(3, 2, 1e-3);
  for (Index t = 0; t < 50; ++t) r.update(log.covariates.row(t).transpose(), log.actions[static_cast<std::size_t>(t)], log.rewards(t));
  RidgeOptions opts;
  opts.penalize_intercept = true;
  const auto batch = fit_ridge(log.covariates, log.actions, log.rewards, 2, 1e-3, opts);
  EXPECT_LT((r.predict(log.covariates) - batch.predict(log.covariates)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(OnlineRidge, FinalStateIndependentOfOrder) {
  const auto log = testing::random_log(60, 2, 3, 9);
  Rng rng(1);
  const auto perm = rng.permutation(60);
  OnlineRidge a(2, 3, 0.5), b(2, 3, 0.5);
  for (Index t = 0; t < 60; ++t) {
    a.update(log.covariates.row(t).transpose(), log.actions[static_cast<std::size_t>(t)], log.rewards(t));
    const Index s = perm[static_cast<std::size_t>(t)];
    b.update(log.covariates.row(s).transpose(), log.actions[static_cast<std::size_t>(s)], log.rewards(s));
  }
  EXPECT_LT((a.snapshot().weights - b.snapshot().weights).cwiseAbs().maxCoeff(), 1e-8);
}

}  // namespace
}  // namespace opelab
