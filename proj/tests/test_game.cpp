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
#include <limits>

#include <Eigen/Dense>

#include "opelab/game.hpp"
#include "opelab/rng.hpp"

namespace opelab {
namespace {

Matrix random_payoff(Rng& rng, Index l, Index e) {
  Matrix c(l, e);
  for (Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1.0, 1.0);
  return c;
}

// Best objective over all basic feasible points of {A x <= b, x >= 0}.
double vertex_enumeration(const Matrix& a, const Vector& b, const Vector& c) {
  const Index m = a.rows(), n = a.cols();
  Matrix rows(m + n, n);
  Vector rhs(m + n);
  rows.topRows(m) = a;
  rhs.head(m) = b;
  rows.bottomRows(n) = -Matrix::Identity(n, n);
  rhs.tail(n).setZero();
  double best = -std::numeric_limits<double>::infinity();
  const Index total = m + n;
  for (unsigned mask = 0; mask < (1u << total); ++mask) {
    if (__builtin_popcount(mask) != n) continue;
    Matrix sub(n, n);
    Vector sr(n);
    Index k = 0;
    for (Index i = 0; i < total; ++i) {
      if (mask & (1u << i)) {
        sub.row(k) = rows.row(i);
        sr(k++) = rhs(i);
      }
    }
    Eigen::FullPivLU<Matrix> lu(sub);
    if (!lu.isInvertible()) continue;
    const Vector x = lu.solve(sr);
    if (((rows * x - rhs).array() <= 1e-9).all()) best = std::max(best, c.dot(x));
  }
  return best;
}

TEST(Lp, SingleVariable) {
  LinearProgram lp{Matrix::Ones(1, 1), Vector::Constant(1, 3.0), {Relation::LessEqual}, Vector::Ones(1)};
  const auto s = lp_solve(lp);
  ASSERT_EQ(s.status, LpStatus::Optimal);
  EXPECT_NEAR(s.x(0), 3.0, 1e-12);
  EXPECT_NEAR(s.objective, 3.0, 1e-12);
}

TEST(Lp, DegenerateRedundantConstraints) {
  Matrix a(4, 2);
  a << 1, 1, 2, 2, 1, 0, 0, 1;
  Vector b(4);
  b << 1, 2, 1, 1;
  LinearProgram lp{a, b, std::vector<Relation>(4, Relation::LessEqual), Eigen::Vector2d(1, 1)};
  const auto s = lp_solve(lp);
  ASSERT_EQ(s.status, LpStatus::Optimal);
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
  lp.relations[0] = Relation::Equal;
  lp.relations[1] = Relation::Equal;
  EXPECT_NEAR(lp_solve(lp).objective, 1.0, 1e-12);
}

TEST(Lp, InfeasibleAndUnboundedAreDistinct) {
  LinearProgram infeasible{Matrix::Ones(2, 1), Eigen::Vector2d(1, 2), {Relation::LessEqual, Relation::GreaterEqual},
                           Vector::Ones(1)};
  EXPECT_EQ(lp_solve(infeasible).status, LpStatus::Infeasible);
  LinearProgram unbounded{Matrix::Ones(1, 1), Vector::Ones(1), {Relation::GreaterEqual}, Vector::Ones(1)};
  EXPECT_EQ(lp_solve(unbounded).status, LpStatus::Unbounded);
  unbounded.sense = Sense::Minimize;
  const auto s = lp_solve(unbounded);
  EXPECT_EQ(s.status, LpStatus::Optimal);
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
}

TEST(Lp, RandomProgramsMatchVertexEnumeration) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = 1 + rng.index(4), n = 1 + rng.index(4);
    Matrix a(m, n);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(0.1, 2.0);
    Vector b(m), c(n);
    for (Index i = 0; i < m; ++i) b(i) = rng.uniform(0.5, 3.0);
    for (Index j = 0; j < n; ++j) c(j) = rng.uniform(-1.0, 2.0);
    const auto s = lp_solve({a, b, std::vector<Relation>(static_cast<std::size_t>(m), Relation::LessEqual), c});
    ASSERT_EQ(s.status, LpStatus::Optimal);
    EXPECT_NEAR(s.objective, vertex_enumeration(a, b, c), 1e-7);
    EXPECT_TRUE((s.x.array() >= -1e-9).all());
    EXPECT_TRUE(((a * s.x - b).array() <= 1e-9).all());
  }
}

TEST(Lp, DualsGiveTheSameObjective) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a(3, 3);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(0.1, 2.0);
    const Vector b = Vector::Constant(3, 1.0);
    const Vector c = Vector::Constant(3, 1.0);
    const auto s = lp_solve({a, b, std::vector<Relation>(3, Relation::LessEqual), c});
    EXPECT_NEAR(s.duals.dot(b), s.objective, 1e-9);
    EXPECT_TRUE((s.duals.array() >= -1e-9).all());
  }
}

TEST(ZeroSum, HandCases) {
  auto g = solve_zero_sum(Matrix::Constant(1, 1, 2.0));
  EXPECT_EQ(g.p_star(0), 1.0);
  EXPECT_EQ(g.value, 2.0);

  Matrix pennies(2, 2);
  pennies << 1, -1, -1, 1;
  g = solve_zero_sum(pennies);
  EXPECT_NEAR(g.p_star(0), 0.5, 1e-12);
  EXPECT_NEAR(g.w_star(0), 0.5, 1e-12);
  EXPECT_NEAR(g.value, 0.0, 1e-12);

  Matrix c(2, 2);
  c << 3, 1, 1, 2;
  g = solve_zero_sum(c);
  EXPECT_NEAR(g.p_star(0), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(g.value, 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(brute_force_value(c, 301), 5.0 / 3.0, 1e-12);
}

TEST(ZeroSum, RejectsBadInput) {
  EXPECT_THROW(solve_zero_sum(Matrix(0, 2)), ShapeError);
  Matrix c = Matrix::Ones(2, 2);
  c(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(solve_zero_sum(c), DomainError);
}

TEST(ZeroSum, EquilibriumProperties) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix c = random_payoff(rng, 1 + rng.index(5), 1 + rng.index(5));
    const auto g = solve_zero_sum(c);
    EXPECT_NEAR(g.p_star.sum(), 1.0, 1e-9);
    EXPECT_NEAR(g.w_star.sum(), 1.0, 1e-9);
    EXPECT_TRUE((g.p_star.array() >= 0).all());
    EXPECT_LE(g.slackness_residual, 1e-6);
    EXPECT_LE(std::abs(g.duality_gap), 1e-7);
    const Eigen::RowVectorXd row = g.p_star.transpose() * c;
    EXPECT_TRUE((row.array() >= g.value - 1e-7).all());
    for (int s = 0; s < 1000; ++s) {
      Vector p(c.rows());
      for (Index i = 0; i < p.size(); ++i) p(i) = -std::log(1.0 - rng.uniform());
      p /= p.sum();
      EXPECT_LE((p.transpose() * c).minCoeff(), g.value + 1e-7);
    }
    EXPECT_NEAR(g.value, -solve_zero_sum(-c.transpose()).value, 1e-7);
  }
}

TEST(ZeroSum, ShiftInvariance) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix c = random_payoff(rng, 3, 4);
    const auto g = solve_zero_sum(c);
    const auto h = solve_zero_sum((c.array() + 2.5).matrix());
    EXPECT_NEAR(h.value, g.value + 2.5, 1e-9);
    // Non-unique equilibria are possible, so compare guaranteed payoffs.
    EXPECT_NEAR((h.p_star.transpose() * c).minCoeff(), g.value, 1e-7);
  }
}

TEST(BruteForce, LowerBoundAndHandCases) {
  EXPECT_EQ(brute_force_value(Matrix::Constant(1, 1, 2.0), 2), 2.0);
  Matrix pennies(2, 2);
  pennies << 1, -1, -1, 1;
  EXPECT_NEAR(brute_force_value(pennies, 101), 0.0, 0.02);
  EXPECT_THROW(brute_force_value(pennies, 1), DomainError);
  EXPECT_THROW(brute_force_value(Matrix::Ones(5, 2), 10), DomainError);
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix c = random_payoff(rng, 1 + rng.index(4), 1 + rng.index(4));
    const double exact = solve_zero_sum(c).value;
    const double grid = brute_force_value(c, 60);
    EXPECT_LE(grid, exact + 1e-9);
    EXPECT_GE(grid, exact - c.cwiseAbs().maxCoeff() * 2.0 / 59.0 * c.rows());
  }
}

}  // namespace
}  // namespace opelab
