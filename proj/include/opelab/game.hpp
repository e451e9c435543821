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

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "opelab/core.hpp"

namespace opelab {

enum class Relation { LessEqual, Equal, GreaterEqual };
enum class Sense { Maximize, Minimize };

/// optimize c'x  s.t.  a_i x (<=, =, >=) b_i,  x >= 0.
struct LinearProgram {
  Matrix a;
  Vector b;
  std::vector<Relation> relations;
  Vector c;
  Sense sense = Sense::Maximize;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LpSolution {
  LpStatus status = LpStatus::Optimal;
  Vector x;
  double objective = 0.0;
  std::vector<Index> basis;  // column indices in the augmented problem
  // Shadow prices of the original constraints for the stated sense.
  Vector duals;
  Index iterations = 0;
};

namespace detail {

// Dense tableau for max c'x, A x = b (b >= 0), x >= 0 with a feasible basis.
class Tableau {
 public:
  Tableau(Matrix a, Vector b, std::vector<Index> basis) : a_(std::move(a)), b_(std::move(b)), basis_(std::move(basis)) {}

  // Runs Bland's-rule pivots for objective c over columns < allowed_cols.
  // Returns false if the problem is unbounded.
  bool optimize(const Vector& c, Index allowed_cols, double tol, Index& iterations) {
    for (;;) {
      Index entering = -1;
      for (Index j = 0; j < allowed_cols; ++j) {
        if (std::find(basis_.begin(), basis_.end(), j) != basis_.end()) continue;
        if (reduced_cost(c, j) > tol) {
          entering = j;
          break;
        }
      }
      if (entering < 0) return true;

      Index leaving_row = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < a_.rows(); ++i) {
        const double coef = a_(i, entering);
        if (coef <= tol) continue;
        const double ratio = b_(i) / coef;
        if (ratio < best_ratio - tol ||
            (std::abs(ratio - best_ratio) <= tol && basis_[static_cast<std::size_t>(i)] <
                                                        basis_[static_cast<std::size_t>(leaving_row)])) {
          best_ratio = std::min(best_ratio, ratio);
          leaving_row = i;
        }
      }
      if (leaving_row < 0) return false;
      pivot(leaving_row, entering);
      ++iterations;
    }
  }

  double reduced_cost(const Vector& c, Index j) const {
    double z = 0.0;
    for (Index i = 0; i < a_.rows(); ++i) z += c(basis_[static_cast<std::size_t>(i)]) * a_(i, j);
    return c(j) - z;
  }

  double objective(const Vector& c) const {
    double z = 0.0;
    for (Index i = 0; i < a_.rows(); ++i) z += c(basis_[static_cast<std::size_t>(i)]) * b_(i);
    return z;
  }

  void pivot(Index row, Index col) {
    const double p = a_(row, col);
    a_.row(row) /= p;
    b_(row) /= p;
    for (Index i = 0; i < a_.rows(); ++i) {
      if (i == row) continue;
      const double f = a_(i, col);
      if (f == 0.0) continue;
      a_.row(i) -= f * a_.row(row);
      b_(i) -= f * b_(row);
    }
    basis_[static_cast<std::size_t>(row)] = col;
  }

  void drop_row(Index row) {
    const Index m = a_.rows();
    Matrix a(m - 1, a_.cols());
    Vector b(m - 1);
    std::vector<Index> basis;
    for (Index i = 0, k = 0; i < m; ++i) {
      if (i == row) continue;
      a.row(k) = a_.row(i);
      b(k) = b_(i);
      basis.push_back(basis_[static_cast<std::size_t>(i)]);
      ++k;
    }
    a_ = std::move(a);
    b_ = std::move(b);
    basis_ = std::move(basis);
  }

  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }
  const std::vector<Index>& basis() const { return basis_; }

 private:
  Matrix a_;
  Vector b_;
  std::vector<Index> basis_;
};

}  // namespace detail

/// Two-phase primal simplex on a dense tableau with Bland's anti-cycling
/// rule. Optimality means no reduced cost exceeds tol.
inline LpSolution lp_solve(const LinearProgram& lp, double tol = 1e-9) {
  const Index m = lp.a.rows();
  const Index n = lp.a.cols();
  if (lp.b.size() != m || static_cast<Index>(lp.relations.size()) != m || lp.c.size() != n) {
    throw ShapeError("lp_solve: inconsistent problem dimensions");
  }
  const double sign = lp.sense == Sense::Maximize ? 1.0 : -1.0;

  // Normalize rows to b >= 0.
  Matrix a = lp.a;
  Vector b = lp.b;
  std::vector<Relation> rel = lp.relations;
  std::vector<double> row_sign(static_cast<std::size_t>(m), 1.0);
  for (Index i = 0; i < m; ++i) {
    if (b(i) < 0.0) {
      a.row(i) *= -1.0;
      b(i) = -b(i);
      row_sign[static_cast<std::size_t>(i)] = -1.0;
      if (rel[static_cast<std::size_t>(i)] == Relation::LessEqual) {
        rel[static_cast<std::size_t>(i)] = Relation::GreaterEqual;
      } else if (rel[static_cast<std::size_t>(i)] == Relation::GreaterEqual) {
        rel[static_cast<std::size_t>(i)] = Relation::LessEqual;
      }
    }
  }

  // Columns: originals, slack/surplus, artificials.
  Index n_slack = 0, n_art = 0;
  for (auto r : rel) {
    if (r != Relation::Equal) ++n_slack;
    if (r != Relation::LessEqual) ++n_art;
  }
  const Index n_total = n + n_slack + n_art;
  Matrix aug = Matrix::Zero(m, n_total);
  aug.leftCols(n) = a;
  std::vector<Index> basis(static_cast<std::size_t>(m));
  Index slack_col = n, art_col = n + n_slack;
  for (Index i = 0; i < m; ++i) {
    switch (rel[static_cast<std::size_t>(i)]) {
      case Relation::LessEqual:
        aug(i, slack_col) = 1.0;
        basis[static_cast<std::size_t>(i)] = slack_col++;
        break;
      case Relation::GreaterEqual:
        aug(i, slack_col++) = -1.0;
        aug(i, art_col) = 1.0;
        basis[static_cast<std::size_t>(i)] = art_col++;
        break;
      case Relation::Equal:
        aug(i, art_col) = 1.0;
        basis[static_cast<std::size_t>(i)] = art_col++;
        break;
    }
  }
  const Matrix aug_original = aug;

  LpSolution sol;
  detail::Tableau tab(aug, b, basis);

  // Phase 1: maximize -sum(artificials).
  if (n_art > 0) {
    Vector c1 = Vector::Zero(n_total);
    c1.tail(n_art).setConstant(-1.0);
    tab.optimize(c1, n_total, tol, sol.iterations);
    if (tab.objective(c1) < -1e-7 * std::max(1.0, b.lpNorm<Eigen::Infinity>())) {
      sol.status = LpStatus::Infeasible;
      return sol;
    }
    // Drive zero-level artificials out of the basis; drop redundant rows.
    for (Index i = tab.a().rows() - 1; i >= 0; --i) {
      if (tab.basis()[static_cast<std::size_t>(i)] < n + n_slack) continue;
      Index col = -1;
      for (Index j = 0; j < n + n_slack; ++j) {
        if (std::abs(tab.a()(i, j)) > tol) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        tab.pivot(i, col);
      } else {
        tab.drop_row(i);
      }
    }
  }

  // Phase 2 over original and slack columns only.
  Vector c2 = Vector::Zero(n_total);
  c2.head(n) = sign * lp.c;
  if (!tab.optimize(c2, n + n_slack, tol, sol.iterations)) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }

  sol.status = LpStatus::Optimal;
  sol.x = Vector::Zero(n);
  for (Index i = 0; i < tab.a().rows(); ++i) {
    const Index col = tab.basis()[static_cast<std::size_t>(i)];
    if (col < n) sol.x(col) = tab.b()(i);
  }
  sol.objective = lp.c.dot(sol.x);
  sol.basis = tab.basis();

  // Duals y' = c_B' B^{-1}, from the basis columns of the augmented matrix.
  // Rows dropped as redundant get no constraint of their own in the basis
  // system; solve in the least-squares sense over all rows instead.
  const Index mb = static_cast<Index>(sol.basis.size());
  Matrix basis_cols(m, mb);
  Vector cb(mb);
  for (Index k = 0; k < mb; ++k) {
    basis_cols.col(k) = aug_original.col(sol.basis[static_cast<std::size_t>(k)]);
    cb(k) = c2(sol.basis[static_cast<std::size_t>(k)]);
  }
  Vector y = basis_cols.transpose().completeOrthogonalDecomposition().solve(cb);
  sol.duals.resize(m);
  for (Index i = 0; i < m; ++i) sol.duals(i) = sign * row_sign[static_cast<std::size_t>(i)] * y(i);
  return sol;
}

// ---------------------------------------------------------------------------
// Zero-sum selection game

/// Player 1 mixes L rows (policies), player 2 mixes E columns (estimators);
/// C[l][e] is estimator e's value of policy l.
struct GameSolution {
  Vector p_star;  // L-simplex
  Vector w_star;  // E-simplex
  double value = 0.0;
  // max_l (C w*)_l - min_e (p*' C)_e; zero at an exact equilibrium.
  double duality_gap = 0.0;
  // Largest complementary-slackness violation of (p*, w*, value).
  double slackness_residual = 0.0;
};

/// max_{z, p in simplex} z  s.t.  p' C >= z 1'. The strategy w* comes from
/// the LP duals of the column constraints.
inline GameSolution solve_zero_sum(const Matrix& c) {
  const Index L = c.rows();
  const Index E = c.cols();
  if (L < 1 || E < 1) throw ShapeError("solve_zero_sum: empty payoff matrix");
  if (!c.allFinite()) throw DomainError("solve_zero_sum: payoff entries must be finite");

  // Variables: p_1..p_L, z+, z-.
  LinearProgram lp;
  lp.a = Matrix::Zero(E + 1, L + 2);
  lp.b = Vector::Zero(E + 1);
  lp.c = Vector::Zero(L + 2);
  lp.c(L) = 1.0;
  lp.c(L + 1) = -1.0;
  for (Index e = 0; e < E; ++e) {
    lp.a.block(e, 0, 1, L) = c.col(e).transpose();
    lp.a(e, L) = -1.0;
    lp.a(e, L + 1) = 1.0;
    lp.relations.push_back(Relation::GreaterEqual);
  }
  lp.a.block(E, 0, 1, L).setOnes();
  lp.b(E) = 1.0;
  lp.relations.push_back(Relation::Equal);

  const LpSolution sol = lp_solve(lp);
  if (sol.status != LpStatus::Optimal) {
    throw NumericalError(std::string("solve_zero_sum: LP reported ") + to_string(sol.status));
  }

  GameSolution g;
  g.p_star = sol.x.head(L).cwiseMax(0.0);
  g.p_star /= g.p_star.sum();
  g.w_star = (-sol.duals.head(E)).cwiseMax(0.0);
  const double wsum = g.w_star.sum();
  if (wsum > 0.0) {
    g.w_star /= wsum;
  } else {
    g.w_star = Vector::Constant(E, 1.0 / static_cast<double>(E));
  }

  const Eigen::RowVectorXd row_payoff = g.p_star.transpose() * c;
  const Vector col_payoff = c * g.w_star;
  g.value = row_payoff.minCoeff();
  g.duality_gap = col_payoff.maxCoeff() - g.value;
  double residual = 0.0;
  for (Index e = 0; e < E; ++e) residual = std::max(residual, std::abs(g.w_star(e) * (row_payoff(e) - g.value)));
  for (Index l = 0; l < L; ++l) residual = std::max(residual, std::abs(g.p_star(l) * (col_payoff(l) - g.value)));
  g.slackness_residual = residual;
  return g;
}

/// max over a simplex grid (step 1 / (resolution - 1)) of min_e (p' C)_e.
/// A lower bound on the game value; for test use with L <= 4.
inline double brute_force_value(const Matrix& c, Index resolution) {
  if (resolution < 2) throw DomainError("brute_force_value: resolution must be at least 2");
  const Index L = c.rows();
  const Index E = c.cols();
  if (L < 1 || E < 1) throw ShapeError("brute_force_value: empty payoff matrix");
  if (L > 4) throw DomainError("brute_force_value: at most 4 rows supported");
  const Index steps = resolution - 1;
  const double h = 1.0 / static_cast<double>(steps);

  double best = -std::numeric_limits<double>::infinity();
  // acc[r] holds sum_{i<r} p_i C_i for the current prefix.
  std::vector<Vector> acc(static_cast<std::size_t>(L), Vector::Zero(E));
  // Depth-first over compositions of `steps` into L nonnegative parts.
  auto recurse = [&](auto&& self, Index row, Index remaining) -> void {
    const Vector& base = acc[static_cast<std::size_t>(row)];
    if (row == L - 1) {
      const double w = static_cast<double>(remaining) * h;
      double worst = std::numeric_limits<double>::infinity();
      for (Index e = 0; e < E; ++e) worst = std::min(worst, base(e) + w * c(row, e));
      best = std::max(best, worst);
      return;
    }
    Vector& next = acc[static_cast<std::size_t>(row + 1)];
    for (Index k = 0; k <= remaining; ++k) {
      const double w = static_cast<double>(k) * h;
      for (Index e = 0; e < E; ++e) next(e) = base(e) + w * c(row, e);
      self(self, row + 1, remaining - k);
    }
  };
  recurse(recurse, 0, steps);
  return best;
}

}  // namespace opelab
