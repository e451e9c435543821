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
#include <concepts>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "opelab/core.hpp"
#include "opelab/rng.hpp"

namespace opelab {

/// Anything that predicts a T x K matrix of per-action rewards from covariates.
template <typename M>
concept RewardModel = requires(const M& m, const Matrix& x) {
  { m.predict(x) } -> std::convertible_to<Matrix>;
};

/// Fits a RewardModel from (covariates, logged actions, rewards, K).
template <typename L>
concept RewardLearner = requires(const L& l, const Matrix& x, const std::vector<int>& a,
                                 const Vector& y, int k) {
  { l.fit(x, a, y, k) } -> RewardModel;
};

struct ConstantModel {
  int num_actions = 1;
  double value = 0.0;

  Matrix predict(const Matrix& x) const { return Matrix::Constant(x.rows(), num_actions, value); }
};

namespace detail {

inline std::vector<std::vector<Index>> rows_by_action(const std::vector<int>& actions, int k) {
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(k));
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const int a = actions[t];
    if (a < 0 || a >= k) throw DomainError("action index out of range");
    rows[static_cast<std::size_t>(a)].push_back(static_cast<Index>(t));
  }
  return rows;
}

inline void check_regression_inputs(const Matrix& x, const std::vector<int>& actions, const Vector& y,
                                    int k) {
  if (x.rows() == 0) throw ShapeError("cannot fit a reward model on zero rows");
  if (static_cast<Index>(actions.size()) != x.rows() || y.size() != x.rows()) {
    throw ShapeError("reward model inputs have inconsistent lengths");
  }
  if (k < 1) throw DomainError("number of actions must be positive");
}

// Solves an SPD system, falling back to LDLT when Cholesky breaks down.
inline Vector solve_spd(const Matrix& a, const Vector& b) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw NumericalError("linear system could not be factorized");
  return ldlt.solve(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ridge regression, one linear model per action

struct RidgeModel {
  Matrix weights;  // K x (d + 1); column 0 is the intercept
  double lambda = 0.0;

  int num_actions() const { return static_cast<int>(weights.rows()); }

  Matrix predict(const Matrix& x) const {
    if (x.cols() + 1 != weights.cols()) throw ShapeError("RidgeModel::predict: dimension mismatch");
    Matrix out = x * weights.rightCols(weights.cols() - 1).transpose();
    out.rowwise() += weights.col(0).transpose();
    return out;
  }
};

struct RidgeOptions {
  // The batch fit leaves the intercept unpenalized by default; the online
  // estimator's prior penalizes it, and this flag reproduces that objective.
  bool penalize_intercept = false;
};

/// Per-action L2-regularized least squares. Actions absent from the data get
/// a constant model at the global reward mean.
inline RidgeModel fit_ridge(const Matrix& x, const std::vector<int>& actions, const Vector& y, int k,
                            double lambda, const RidgeOptions& options = {}) {
  detail::check_regression_inputs(x, actions, y, k);
  if (lambda < 0.0) throw DomainError("ridge lambda must be nonnegative");
  const Index d = x.cols();
  RidgeModel model{Matrix::Zero(k, d + 1), lambda};
  const double global_mean = y.mean();
  const auto groups = detail::rows_by_action(actions, k);

  for (int a = 0; a < k; ++a) {
    const auto& rows = groups[static_cast<std::size_t>(a)];
    if (rows.empty()) {
      model.weights(a, 0) = global_mean;
      continue;
    }
    const Matrix xa = take_rows(x, rows);
    Vector ya(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) ya(static_cast<Index>(i)) = y(rows[i]);

    if (options.penalize_intercept) {
      Matrix phi(xa.rows(), d + 1);
      phi.col(0).setOnes();
      phi.rightCols(d) = xa;
      Matrix gram = phi.transpose() * phi;
      gram.diagonal().array() += lambda;
      model.weights.row(a) = detail::solve_spd(gram, phi.transpose() * ya).transpose();
    } else {
      const Eigen::RowVectorXd xbar = xa.colwise().mean();
      const double ybar = ya.mean();
      const Matrix xc = xa.rowwise() - xbar;
      const Vector yc = ya.array() - ybar;
      Matrix gram = xc.transpose() * xc;
      gram.diagonal().array() += lambda;
      Vector slope = Vector::Zero(d);
      if (d > 0) slope = detail::solve_spd(gram, xc.transpose() * yc);
      model.weights(a, 0) = ybar - xbar.dot(slope);
      model.weights.row(a).tail(d) = slope.transpose();
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Kernel ridge regression with the Gaussian (RBF) kernel

template <typename A, typename B>
double rbf_kernel(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v, double gamma) {
  return std::exp(-gamma * (u - v).squaredNorm());
}

/// Cross-kernel matrix k(a_i, b_j) = exp(-gamma ||a_i - b_j||^2).
inline Matrix rbf_gram(const Matrix& a, const Matrix& b, double gamma) {
  Matrix g(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (Index c = 0; c < a.cols(); ++c) {
        const double diff = a(i, c) - b(j, c);
        s += diff * diff;
      }
      g(i, j) = std::exp(-gamma * s);
    }
  }
  return g;
}

struct KernelRidgeModel {
  struct Component {
    Matrix support;  // n_a x d
    Vector dual;     // n_a
    bool constant = false;
    double constant_value = 0.0;
  };
  std::vector<Component> components;  // one per action
  double gamma = 1.0;
  double lambda = 1.0;

  int num_actions() const { return static_cast<int>(components.size()); }

  Matrix predict(const Matrix& x) const {
    Matrix out(x.rows(), num_actions());
    for (int a = 0; a < num_actions(); ++a) {
      const auto& c = components[static_cast<std::size_t>(a)];
      if (c.constant) {
        out.col(a).setConstant(c.constant_value);
      } else {
        out.col(a) = rbf_gram(x, c.support, gamma) * c.dual;
      }
    }
    return out;
  }
};

/// Dual coefficients (G + lambda I)^{-1} y on each action's subsample.
inline KernelRidgeModel fit_kernel_ridge(const Matrix& x, const std::vector<int>& actions,
                                         const Vector& y, int k, double gamma, double lambda) {
  detail::check_regression_inputs(x, actions, y, k);
  if (!(lambda > 0.0)) throw DomainError("kernel ridge lambda must be positive");
  if (!(gamma > 0.0)) throw DomainError("kernel ridge gamma must be positive");
  KernelRidgeModel model;
  model.gamma = gamma;
  model.lambda = lambda;
  const double global_mean = y.mean();
  const auto groups = detail::rows_by_action(actions, k);
  for (int a = 0; a < k; ++a) {
    const auto& rows = groups[static_cast<std::size_t>(a)];
    KernelRidgeModel::Component c;
    if (rows.empty()) {
      c.constant = true;
      c.constant_value = global_mean;
    } else {
      c.support = take_rows(x, rows);
      Vector ya(static_cast<Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) ya(static_cast<Index>(i)) = y(rows[i]);
      Matrix gram = rbf_gram(c.support, c.support, gamma);
      gram.diagonal().array() += lambda;
      c.dual = detail::solve_spd(gram, ya);
    }
    model.components.push_back(std::move(c));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Feature maps and multinomial logistic policies

enum class FeatureMapKind { Linear, Poly2, RbfRandom };

inline const char* to_string(FeatureMapKind kind) {
  switch (kind) {
    case FeatureMapKind::Linear: return "linear";
    case FeatureMapKind::Poly2: return "poly2";
    case FeatureMapKind::RbfRandom: return "rbf";
  }
  return "?";
}

struct FeatureMapSpec {
  FeatureMapKind kind = FeatureMapKind::Linear;
  Index count = 200;     // random features (RbfRandom only)
  double gamma = 0.1;    // RBF width (RbfRandom only)
  std::uint64_t seed = 0;
};

inline constexpr Index kPoly2MaxInputs = 50;

/// Maps raw covariates to a design matrix whose first column is the constant 1.
struct FeatureMap {
  FeatureMapSpec spec;
  Index input_dim = 0;
  Matrix omega;  // d x D, RbfRandom only
  Vector phase;  // D, RbfRandom only

  Index output_dim() const {
    switch (spec.kind) {
      case FeatureMapKind::Linear: return 1 + input_dim;
      case FeatureMapKind::Poly2: return 1 + input_dim + input_dim * (input_dim + 1) / 2;
      case FeatureMapKind::RbfRandom: return 1 + omega.cols();
    }
    return 0;
  }

  Matrix transform(const Matrix& x) const {
    if (x.cols() != input_dim) throw ShapeError("FeatureMap::transform: dimension mismatch");
    Matrix out(x.rows(), output_dim());
    out.col(0).setOnes();
    switch (spec.kind) {
      case FeatureMapKind::Linear:
        out.rightCols(input_dim) = x;
        break;
      case FeatureMapKind::Poly2: {
        out.middleCols(1, input_dim) = x;
        Index c = 1 + input_dim;
        for (Index i = 0; i < input_dim; ++i) {
          for (Index j = i; j < input_dim; ++j) out.col(c++) = x.col(i).cwiseProduct(x.col(j));
        }
        break;
      }
      case FeatureMapKind::RbfRandom: {
        const double scale = std::sqrt(2.0 / static_cast<double>(omega.cols()));
        Matrix proj = x * omega;
        proj.rowwise() += phase.transpose();
        out.rightCols(omega.cols()) = scale * proj.array().cos().matrix();
        break;
      }
    }
    return out;
  }
};

/// Builds a feature map for d inputs. Random Fourier features approximate
/// exp(-gamma ||x - x'||^2) with frequencies drawn from N(0, 2 gamma I).
inline FeatureMap make_feature_map(const FeatureMapSpec& spec, Index d) {
  FeatureMap map;
  map.spec = spec;
  map.input_dim = d;
  if (spec.kind == FeatureMapKind::Poly2 && d > kPoly2MaxInputs) {
    throw DomainError("poly2 feature map supports at most " + std::to_string(kPoly2MaxInputs) +
                      " inputs, got " + std::to_string(d));
  }
  if (spec.kind == FeatureMapKind::RbfRandom) {
    if (spec.count < 1) throw DomainError("random feature count must be positive");
    if (!(spec.gamma > 0.0)) throw DomainError("random feature gamma must be positive");
    Rng rng(spec.seed);
    const double sd = std::sqrt(2.0 * spec.gamma);
    map.omega.resize(d, spec.count);
    for (Index j = 0; j < spec.count; ++j) {
      for (Index i = 0; i < d; ++i) map.omega(i, j) = rng.normal(0.0, sd);
    }
    map.phase.resize(spec.count);
    for (Index j = 0; j < spec.count; ++j) map.phase(j) = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  return map;
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    double s = 0.0;
    for (Index a = 0; a < logits.cols(); ++a) {
      out(i, a) = std::exp(logits(i, a) - m);
      s += out(i, a);
    }
    out.row(i) /= s;
  }
  return out;
}

struct LogisticPolicyModel {
  FeatureMap map;
  Matrix weights;                 // p x |present classes|
  std::vector<int> present;       // class ids with a column in weights
  int class_count = 0;
  double l2 = 0.0;
  Index iterations = 0;
  double gradient_norm = 0.0;

  /// Class probabilities (N x K); classes absent from training get 0.
  Matrix predict_proba(const Matrix& x) const {
    const Matrix p = softmax_rows(map.transform(x) * weights);
    Matrix out = Matrix::Zero(x.rows(), class_count);
    for (std::size_t c = 0; c < present.size(); ++c) {
      out.col(present[c]) = p.col(static_cast<Index>(c));
    }
    return out;
  }

  // Argmax class per row, ties to the lowest index.
  std::vector<int> predict(const Matrix& x) const {
    const Matrix p = predict_proba(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < p.rows(); ++i) {
      Index best = 0;
      for (Index a = 1; a < p.cols(); ++a) {
        if (p(i, a) > p(i, best)) best = a;
      }
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }
};

struct LogisticOptions {
  double tolerance = 1e-6;  // on the Euclidean gradient norm
  int max_iterations = 5000;
  int memory = 10;          // L-BFGS history
};

namespace detail {

// Negative penalized mean log-likelihood and its gradient. The intercept row
// (row 0) is unpenalized.
inline double logistic_objective(const Matrix& phi, const Matrix& targets, const Matrix& w, double l2,
                                 Matrix& grad) {
  const Index n = phi.rows();
  Matrix logits = phi * w;
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    double s = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) s += std::exp(logits(i, c) - m);
    const double log_norm = m + std::log(s);
    for (Index c = 0; c < logits.cols(); ++c) {
      const double log_p = logits(i, c) - log_norm;
      if (targets(i, c) > 0.0) loss -= targets(i, c) * log_p;
      logits(i, c) = std::exp(log_p);
    }
  }
  loss /= static_cast<double>(n);
  grad = phi.transpose() * (logits - targets) / static_cast<double>(n);
  const auto body = w.bottomRows(w.rows() - 1);
  loss += 0.5 * l2 * body.squaredNorm();
  grad.bottomRows(w.rows() - 1) += l2 * body;
  return loss;
}

}  // namespace detail

/// Multinomial logistic regression maximizing the L2-penalized mean
/// log-likelihood with full-batch L-BFGS until the gradient norm reaches
/// the tolerance or the iteration cap.
inline LogisticPolicyModel fit_logistic_policy(const Matrix& x, const std::vector<int>& labels, int k,
                                               const FeatureMapSpec& map_spec, double l2,
                                               const LogisticOptions& options = {}) {
  if (x.rows() == 0 || static_cast<Index>(labels.size()) != x.rows()) {
    throw ShapeError("fit_logistic_policy: inconsistent inputs");
  }
  if (l2 < 0.0) throw DomainError("l2 must be nonnegative");
  std::vector<int> present;
  for (int label : labels) {
    if (label < 0 || label >= k) throw DomainError("label out of range");
    if (std::find(present.begin(), present.end(), label) == present.end()) present.push_back(label);
  }
  std::sort(present.begin(), present.end());
  if (present.size() < 2) throw DomainError("fit_logistic_policy: need at least 2 classes");

  LogisticPolicyModel model;
  model.map = make_feature_map(map_spec, x.cols());
  model.present = present;
  model.class_count = k;
  model.l2 = l2;

  const Matrix phi = model.map.transform(x);
  const Index p = phi.cols();
  const Index c = static_cast<Index>(present.size());
  Matrix targets = Matrix::Zero(x.rows(), c);
  Vector freq = Vector::Zero(c);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto col = std::lower_bound(present.begin(), present.end(), labels[i]) - present.begin();
    targets(static_cast<Index>(i), col) = 1.0;
    freq(col) += 1.0;
  }

  // Start at the intercept-only optimum.
  Matrix w = Matrix::Zero(p, c);
  freq /= static_cast<double>(x.rows());
  for (Index j = 0; j < c; ++j) w(0, j) = std::log(freq(j));
  w.row(0).array() -= w.row(0).mean();

  Matrix grad;
  double f = detail::logistic_objective(phi, targets, w, l2, grad);
  std::deque<std::pair<Matrix, Matrix>> history;  // (s, y) pairs
  Index iter = 0;
  double gnorm = grad.norm();

  while (gnorm > options.tolerance && iter < options.max_iterations) {
    // Two-loop recursion.
    Matrix q = grad;
    std::vector<double> alpha(history.size());
    for (std::size_t i = history.size(); i-- > 0;) {
      const auto& [s, yv] = history[i];
      const double rho = 1.0 / (yv.cwiseProduct(s).sum());
      alpha[i] = rho * s.cwiseProduct(q).sum();
      q -= alpha[i] * yv;
    }
    if (!history.empty()) {
      const auto& [s, yv] = history.back();
      q *= s.cwiseProduct(yv).sum() / yv.squaredNorm();
    } else {
      q /= std::max(1.0, gnorm);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const auto& [s, yv] = history[i];
      const double rho = 1.0 / (yv.cwiseProduct(s).sum());
      const double beta = rho * yv.cwiseProduct(q).sum();
      q += (alpha[i] - beta) * s;
    }
    Matrix dir = -q;
    double slope = grad.cwiseProduct(dir).sum();
    if (!(slope < 0.0)) {
      history.clear();
      dir = -grad / std::max(1.0, gnorm);
      slope = grad.cwiseProduct(dir).sum();
    }

    // Backtracking Armijo line search.
    double step = 1.0;
    Matrix w_new, grad_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      w_new = w + step * dir;
      f_new = detail::logistic_objective(phi, targets, w_new, l2, grad_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++iter;
    if (!accepted) break;

    Matrix s = w_new - w;
    Matrix yv = grad_new - grad;
    if (s.cwiseProduct(yv).sum() > 1e-12) {
      history.emplace_back(std::move(s), std::move(yv));
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }
    w = std::move(w_new);
    grad = std::move(grad_new);
    f = f_new;
    gnorm = grad.norm();
  }

  model.weights = std::move(w);
  model.iterations = iter;
  model.gradient_norm = gnorm;
  return model;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CVGrid {
  std::vector<double> lambdas{0.01, 0.1, 1.0};
  std::vector<double> gammas{0.01, 0.1, 1.0};  // empty when the learner has no width
  int folds = 2;
};

struct HyperParams {
  double lambda = 0.0;
  double gamma = 0.0;
};

struct CvResult {
  HyperParams best;
  std::vector<std::pair<HyperParams, double>> losses;  // in (lambda, gamma) order
};

/// Seeded contiguous folds over a permutation of 0..n-1.
inline std::vector<std::vector<Index>> make_folds(Index n, int folds, std::uint64_t seed) {
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    const Index lo = n * f / folds;
    const Index hi = n * (f + 1) / folds;
    out[static_cast<std::size_t>(f)].assign(perm.begin() + lo, perm.begin() + hi);
  }
  return out;
}

/// Picks the grid point with the smallest mean held-out loss.
/// fold_loss(params, train_rows, test_rows) returns the mean loss on test_rows.
/// Ties go to the smallest lambda, then the smallest gamma.
template <typename FoldLoss>
CvResult cross_validate(const CVGrid& grid, Index n, std::uint64_t seed, FoldLoss&& fold_loss) {
  if (grid.lambdas.empty()) throw DomainError("cross_validate: empty lambda grid");
  if (grid.folds < 2) throw DomainError("cross_validate: need at least 2 folds");
  if (n < 2 * grid.folds) throw DomainError("cross_validate: too few rows for the fold count");

  std::vector<double> lambdas = grid.lambdas;
  std::vector<double> gammas = grid.gammas.empty() ? std::vector<double>{0.0} : grid.gammas;
  std::sort(lambdas.begin(), lambdas.end());
  std::sort(gammas.begin(), gammas.end());

  const auto folds = make_folds(n, grid.folds, seed);
  CvResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double lambda : lambdas) {
    for (double gamma : gammas) {
      const HyperParams hp{lambda, gamma};
      double total = 0.0;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<Index> train;
        for (std::size_t g = 0; g < folds.size(); ++g) {
          if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
        }
        total += fold_loss(hp, train, folds[f]);
      }
      const double loss = total / static_cast<double>(folds.size());
      result.losses.emplace_back(hp, loss);
      if (loss < best_loss) {
        best_loss = loss;
        result.best = hp;
      }
    }
  }
  return result;
}

namespace detail {

template <typename FitFn>
double heldout_squared_error(const Matrix& x, const std::vector<int>& actions, const Vector& y, int k,
                             const std::vector<Index>& train, const std::vector<Index>& test,
                             FitFn&& fit) {
  std::vector<int> a_train;
  Vector y_train(static_cast<Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    a_train.push_back(actions[static_cast<std::size_t>(train[i])]);
    y_train(static_cast<Index>(i)) = y(train[i]);
  }
  const auto model = fit(take_rows(x, train), a_train, y_train, k);
  const Matrix pred = model.predict(take_rows(x, test));
  double loss = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double r = y(test[i]) - pred(static_cast<Index>(i), actions[static_cast<std::size_t>(test[i])]);
    loss += r * r;
  }
  return loss / static_cast<double>(test.size());
}

}  // namespace detail

inline CvResult cv_ridge(const Matrix& x, const std::vector<int>& actions, const Vector& y, int k,
                         CVGrid grid, std::uint64_t seed) {
  grid.gammas.clear();
  return cross_validate(grid, x.rows(), seed, [&](const HyperParams& hp, const auto& train, const auto& test) {
    return detail::heldout_squared_error(x, actions, y, k, train, test,
                                         [&](const Matrix& xt, const std::vector<int>& at, const Vector& yt, int kk) {
                                           return fit_ridge(xt, at, yt, kk, hp.lambda);
                                         });
  });
}

inline CvResult cv_kernel_ridge(const Matrix& x, const std::vector<int>& actions, const Vector& y, int k,
                                const CVGrid& grid, std::uint64_t seed) {
  return cross_validate(grid, x.rows(), seed, [&](const HyperParams& hp, const auto& train, const auto& test) {
    return detail::heldout_squared_error(x, actions, y, k, train, test,
                                         [&](const Matrix& xt, const std::vector<int>& at, const Vector& yt, int kk) {
                                           return fit_kernel_ridge(xt, at, yt, kk, hp.gamma, hp.lambda);
                                         });
  });
}

/// Cross-validated l2 for a logistic policy; the grid's lambdas are l2 values.
inline CvResult cv_logistic(const Matrix& x, const std::vector<int>& labels, int k,
                            const FeatureMapSpec& map, CVGrid grid, std::uint64_t seed,
                            const LogisticOptions& options = {}) {
  grid.gammas.clear();
  return cross_validate(grid, x.rows(), seed, [&](const HyperParams& hp, const auto& train, const auto& test) {
    std::vector<int> y_train, y_test;
    for (auto i : train) y_train.push_back(labels[static_cast<std::size_t>(i)]);
    for (auto i : test) y_test.push_back(labels[static_cast<std::size_t>(i)]);
    const auto model = fit_logistic_policy(take_rows(x, train), y_train, k, map, hp.lambda, options);
    const Matrix p = model.predict_proba(take_rows(x, test));
    double loss = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      loss -= std::log(std::max(p(static_cast<Index>(i), y_test[i]), 1e-300));
    }
    return loss / static_cast<double>(test.size());
  });
}

// ---------------------------------------------------------------------------
// Learners

struct ZeroLearner {
  ConstantModel fit(const Matrix&, const std::vector<int>&, const Vector&, int k) const { return {k, 0.0}; }
};

struct RidgeLearner {
  double lambda = 1e-8;
  RidgeModel fit(const Matrix& x, const std::vector<int>& a, const Vector& y, int k) const {
    return fit_ridge(x, a, y, k, lambda);
  }
};

struct KernelRidgeLearner {
  double gamma = 0.1;
  double lambda = 0.1;
  KernelRidgeModel fit(const Matrix& x, const std::vector<int>& a, const Vector& y, int k) const {
    return fit_kernel_ridge(x, a, y, k, gamma, lambda);
  }
};

// Tunes (gamma, lambda) by cross-validation, then refits on all rows. Falls
// back to the grid's middle point when the data is too small to fold.
struct KernelRidgeCVLearner {
  CVGrid grid;
  std::uint64_t seed = 0;
  KernelRidgeModel fit(const Matrix& x, const std::vector<int>& a, const Vector& y, int k) const {
    HyperParams hp{grid.lambdas[grid.lambdas.size() / 2],
                   grid.gammas.empty() ? 0.1 : grid.gammas[grid.gammas.size() / 2]};
    if (x.rows() >= 2 * grid.folds) hp = cv_kernel_ridge(x, a, y, k, grid, seed).best;
    return fit_kernel_ridge(x, a, y, k, hp.gamma, hp.lambda);
  }
};

// ---------------------------------------------------------------------------
// Recursive least squares

/// Per-action ridge model updated one observation at a time. The prior
/// information matrix is lambda * I over [1, x], so with no data every
/// prediction is 0.
class OnlineRidge {
 public:
  OnlineRidge(Index dim, int num_actions, double lambda) : dim_(dim), lambda_(lambda) {
    if (!(lambda > 0.0)) throw DomainError("online ridge lambda must be positive");
    if (num_actions < 1) throw DomainError("number of actions must be positive");
    for (int a = 0; a < num_actions; ++a) {
      states_.push_back({Matrix::Identity(dim + 1, dim + 1) / lambda, Vector::Zero(dim + 1), 0});
    }
  }

  int num_actions() const { return static_cast<int>(states_.size()); }
  Index dim() const { return dim_; }
  double lambda() const { return lambda_; }
  Index count(int a) const { return states_[static_cast<std::size_t>(a)].count; }

  template <typename Row>
  Vector predict_row(const Eigen::MatrixBase<Row>& x) const {
    Vector out(num_actions());
    for (int a = 0; a < num_actions(); ++a) out(a) = predict(x, a);
    return out;
  }

  template <typename Row>
  double predict(const Eigen::MatrixBase<Row>& x, int a) const {
    const auto& w = states_[static_cast<std::size_t>(a)].w;
    return w(0) + x.dot(w.tail(dim_));
  }

  Matrix predict(const Matrix& x) const {
    Matrix out(x.rows(), num_actions());
    for (Index i = 0; i < x.rows(); ++i) out.row(i) = predict_row(x.row(i).transpose()).transpose();
    return out;
  }

  // Rank-one (Sherman-Morrison) update of the chosen action's state.
  template <typename Row>
  void update(const Eigen::MatrixBase<Row>& x, int a, double y) {
    if (a < 0 || a >= num_actions()) throw DomainError("OnlineRidge::update: action out of range");
    if (x.size() != dim_) throw ShapeError("OnlineRidge::update: dimension mismatch");
    auto& s = states_[static_cast<std::size_t>(a)];
    Vector phi(dim_ + 1);
    phi(0) = 1.0;
    phi.tail(dim_) = x;
    const Vector pphi = s.p * phi;
    const double denom = 1.0 + phi.dot(pphi);
    const Vector gain = pphi / denom;
    s.w += gain * (y - phi.dot(s.w));
    s.p -= gain * pphi.transpose();
    s.p = 0.5 * (s.p + s.p.transpose());
    ++s.count;
  }

  RidgeModel snapshot() const {
    RidgeModel m{Matrix(num_actions(), dim_ + 1), lambda_};
    for (int a = 0; a < num_actions(); ++a) m.weights.row(a) = states_[static_cast<std::size_t>(a)].w.transpose();
    return m;
  }

 private:
  struct State {
    Matrix p;  // inverse information matrix
    Vector w;
    Index count;
  };
  Index dim_;
  double lambda_;
  std::vector<State> states_;
};

}  // namespace opelab
