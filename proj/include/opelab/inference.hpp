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
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "opelab/core.hpp"
#include "opelab/estimators.hpp"

namespace opelab {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {

// Rational approximation (Acklam) for p in (0, 0.5], refined by one Halley
// step against erfc. Accurate to about 1e-15 relative in the tail.
inline double lower_normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace detail

/// Inverse standard-normal CDF. Odd about 0.5: for q >= 1e-3 the lower half
/// is computed as the negated upper half.
inline double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("normal_quantile: q must lie in (0, 1)");
  if (q == 0.5) return 0.0;
  if (q > 0.5) return -detail::lower_normal_quantile(1.0 - q);
  if (q < 1e-3) return detail::lower_normal_quantile(q);
  return detail::lower_normal_quantile(1.0 - (1.0 - q));
}

// ---------------------------------------------------------------------------
// Efficient combination

/// Sigma^{-1} 1 / (1' Sigma^{-1} 1) for a symmetric positive definite Sigma.
inline Vector efficient_weights(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1) throw ShapeError("covariance must be square and nonempty");
  if (!sigma.allFinite()) throw DomainError("covariance entries must be finite");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) {
    throw DomainError("covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) throw NumericalError("covariance is singular or ill-conditioned");
  const Vector x = sigma.ldlt().solve(Vector::Ones(sigma.rows()));
  return x / x.sum();
}

struct CombinedEstimate {
  double value = 0.0;
  double variance = 0.0;
  Vector weights;
};

inline CombinedEstimate efficient_combine(const Vector& estimates, const Matrix& sigma) {
  if (estimates.size() != sigma.rows()) throw ShapeError("efficient_combine: estimate count must match Sigma");
  CombinedEstimate out;
  out.weights = efficient_weights(sigma);
  out.value = out.weights.dot(estimates);
  out.variance = 1.0 / sigma.ldlt().solve(Vector::Ones(sigma.rows())).sum();
  return out;
}

// ---------------------------------------------------------------------------
// Testing and power

struct Correction {
  enum class Kind { None, Bonferroni } kind = Kind::None;
  int comparisons = 1;

  static Correction none() { return {}; }
  static Correction bonferroni(int m) {
    if (m < 1) throw DomainError("Bonferroni correction needs at least one comparison");
    return {Kind::Bonferroni, m};
  }
};

struct TestResult {
  double z_statistic = 0.0;
  double p_value = 1.0;  // after correction
  double raw_p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
  Correction correction;

  bool rejects_at(double level) const { return p_value <= level; }
};

/// Two-sided z test of R1 = R2.
inline TestResult z_test_difference(double est1, double est2, double var_diff, double alpha = 0.05,
                                    Correction correction = {}) {
  if (!(var_diff > 0.0) || !std::isfinite(var_diff)) throw DomainError("z test: variance must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("z test: alpha must lie in (0, 1)");
  TestResult r;
  r.z_statistic = (est1 - est2) / std::sqrt(var_diff);
  r.raw_p_value = std::min(1.0, std::erfc(std::abs(r.z_statistic) / std::numbers::sqrt2));
  const double m = correction.kind == Correction::Kind::Bonferroni ? correction.comparisons : 1.0;
  r.p_value = std::min(1.0, r.raw_p_value * m);
  r.alpha = alpha;
  r.reject = r.rejects_at(alpha);
  r.correction = correction;
  return r;
}

/// Smallest T with power beta for a difference delta at two-sided level
/// alpha when the asymptotic variance is at most sigma2_max.
inline Index sample_size(double sigma2_max, double delta, double alpha, double beta) {
  if (!(sigma2_max > 0.0)) throw DomainError("sample_size: sigma2 must be positive");
  if (!(delta > 0.0)) throw DomainError("sample_size: delta must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("sample_size: alpha must lie in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("sample_size: beta must lie in (0, 1)");
  const double z = normal_quantile(1.0 - alpha / 2.0) + normal_quantile(beta);
  return static_cast<Index>(std::ceil(sigma2_max * z * z / (delta * delta)));
}

// ---------------------------------------------------------------------------
// Experimental design

struct DesignOptions {
  double floor = 0.01;
  int iterations = 2000;
  Index grid_resolution = 200;  // used when K <= 3
};

struct DesignResult {
  Vector behavior;  // context-free behavior probabilities
  double bound = 0.0;          // max over policies of the efficiency bound
  double uniform_bound = 0.0;  // same objective at the uniform vector
  bool from_grid = false;
};

/// Euclidean projection onto { b : b_a >= floor, sum b = 1 }.
inline Vector project_floored_simplex(const Vector& y, double floor) {
  double lo = y.minCoeff() - 1.0, hi = y.maxCoeff();
  auto mass = [&](double tau) { return (y.array() - tau).cwiseMax(floor).sum(); };
  for (int i = 0; i < 200 && hi - lo > 1e-16; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  Vector b = (y.array() - 0.5 * (lo + hi)).cwiseMax(floor);
  return b;
}

namespace detail {

// With a context-free behavior vector b the bound of policy l is
// sum_a c(l, a) / b_a + k(l); c and k are sample averages.
struct DesignObjective {
  Matrix coef;  // L x K
  Vector offset;

  double value(const Vector& b, Index* arg = nullptr) const {
    const Vector v = coef * b.cwiseInverse() + offset;
    Index l = 0;
    const double m = v.maxCoeff(&l);
    if (arg) *arg = l;
    return m;
  }
};

inline DesignObjective design_objective(const std::vector<PolicyMatrix>& policies, const GroundTruth& truth) {
  const Index K = truth.f_star.cols();
  const Index T = truth.f_star.rows();
  DesignObjective obj{Matrix(static_cast<Index>(policies.size()), K), Vector(static_cast<Index>(policies.size()))};
  for (std::size_t l = 0; l < policies.size(); ++l) {
    const Matrix& pe = policies[l].probs;
    require_same_shape(pe, truth.f_star, "efficient_design");
    obj.coef.row(static_cast<Index>(l)) = (pe.cwiseProduct(pe).cwiseProduct(truth.nu_star)).colwise().mean();
    const Vector direct = pe.cwiseProduct(truth.f_star).rowwise().sum();
    obj.offset(static_cast<Index>(l)) = (direct.array() - direct.mean()).square().sum() / static_cast<double>(T);
  }
  return obj;
}

}  // namespace detail

/// argmin over floored context-free behavior vectors of the largest
/// efficiency bound across the evaluation policies.
inline DesignResult efficient_design(const std::vector<PolicyMatrix>& policies, const GroundTruth& truth,
                                     const DesignOptions& options = {}) {
  if (policies.empty()) throw DomainError("efficient_design: empty policy set");
  require_same_shape(truth.f_star, truth.nu_star, "efficient_design");
  const Index K = truth.f_star.cols();
  if (K < 1 || truth.f_star.rows() < 1) throw ShapeError("efficient_design: empty ground truth");
  if (!(options.floor > 0.0) || options.floor * static_cast<double>(K) > 1.0) {
    throw DomainError("efficient_design: floor must be positive and at most 1/K");
  }
  if ((truth.nu_star.array() < 0.0).any()) throw DomainError("efficient_design: conditional variances must be >= 0");
  const auto obj = detail::design_objective(policies, truth);

  DesignResult out;
  const Vector uniform = Vector::Constant(K, 1.0 / static_cast<double>(K));
  out.uniform_bound = obj.value(uniform);
  Vector b = uniform;
  out.behavior = b;
  out.bound = out.uniform_bound;
  for (int k = 1; k <= options.iterations; ++k) {
    Index l = 0;
    obj.value(b, &l);
    const Vector g = -(obj.coef.row(l).transpose().array() / b.array().square()).matrix();
    const double norm = g.norm();
    if (norm == 0.0) break;
    b = project_floored_simplex(b - g / (norm * std::sqrt(static_cast<double>(k))), options.floor);
    const double v = obj.value(b);
    if (v < out.bound) {
      out.bound = v;
      out.behavior = b;
    }
  }

  if (K <= 3 && options.grid_resolution >= 2) {
    const Index steps = options.grid_resolution - 1;
    const double h = 1.0 / static_cast<double>(steps);
    Vector p(K);
    auto consider = [&]() {
      if (p.minCoeff() < options.floor) return;
      const double v = obj.value(p);
      if (v < out.bound) {
        out.bound = v;
        out.behavior = p;
        out.from_grid = true;
      }
    };
    if (K == 1) {
      p(0) = 1.0;
      consider();
    } else if (K == 2) {
      for (Index i = 0; i <= steps; ++i) {
        p << i * h, 1.0 - i * h;
        consider();
      }
    } else {
      for (Index i = 0; i <= steps; ++i) {
        for (Index j = 0; i + j <= steps; ++j) {
          p << i * h, j * h, static_cast<double>(steps - i - j) * h;
          consider();
        }
      }
    }
  }
  return out;
}

}  // namespace opelab
