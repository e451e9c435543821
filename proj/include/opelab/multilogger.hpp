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

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opelab/core.hpp"
#include "opelab/estimators.hpp"
#include "opelab/models.hpp"
#include "opelab/parallel.hpp"
#include "opelab/policies.hpp"
#include "opelab/synthetic.hpp"

namespace opelab {

/// Size-weighted average sum_m (T_m / T) pi_b^(m) of the stratum behavior
/// policies. Equal sizes by default.
inline PolicyMatrix mixture_propensity(const std::vector<PolicyMatrix>& policies,
                                       const std::vector<Index>& sizes = {}) {
  if (policies.empty()) throw DomainError("mixture_propensity: no policies");
  if (!sizes.empty() && sizes.size() != policies.size()) throw ShapeError("mixture_propensity: one size per policy");
  double total = 0.0;
  for (std::size_t m = 0; m < policies.size(); ++m) {
    const double s = sizes.empty() ? 1.0 : static_cast<double>(sizes[m]);
    if (!(s > 0.0)) throw DomainError("mixture_propensity: sizes must be positive");
    total += s;
  }
  Matrix sum = Matrix::Zero(policies.front().rows(), policies.front().num_actions());
  for (std::size_t m = 0; m < policies.size(); ++m) {
    require_same_shape(sum, policies[m].probs, "mixture_propensity");
    sum += (sizes.empty() ? 1.0 : static_cast<double>(sizes[m])) / total * policies[m].probs;
  }
  return {sum, PolicyKind::Fixed, {}};
}

/// Per-stratum AIPW values D_T and their variances sigma2_(m), already
/// multiplied by T / T_m so that sum_m w_m^2 sigma2_(m) is the asymptotic
/// variance of sqrt(T) times the combined estimate.
struct StratifiedEstimate {
  Vector d_values;
  Vector sigma2;
  std::vector<Index> sizes;

  Index strata() const { return d_values.size(); }
  Index total_size() const {
    Index t = 0;
    for (auto s : sizes) t += s;
    return t;
  }
};

/// Cross-fit AIPW per stratum. Every stratum uses the same seed, so
/// identical strata produce identical estimates.
template <RewardLearner L>
StratifiedEstimate stratum_estimates(const std::vector<LoggedBanditData>& strata, const PolicyFn& eval_policy,
                                     const L& learner, std::uint64_t seed, double floor = kDefaultPropensityFloor) {
  if (strata.empty()) throw DomainError("stratum_estimates: no strata");
  const auto m_count = static_cast<Index>(strata.size());
  StratifiedEstimate est{Vector(m_count), Vector(m_count), {}};
  Index total = 0;
  for (const auto& log : strata) {
    if (log.size() < 4) throw DomainError("stratum_estimates: each stratum needs at least 4 records");
    total += log.size();
  }
  for (Index m = 0; m < m_count; ++m) {
    const auto& log = strata[static_cast<std::size_t>(m)];
    const ScoreMatrix scores = aipw_crossfit(log, learner, seed, floor);
    const PolicyMatrix pi = eval_policy(log.covariates);
    const Estimate e = estimate(pi, scores);
    est.d_values(m) = e.value;
    est.sigma2(m) = e.variance.empirical_variance * static_cast<double>(total) / static_cast<double>(log.size());
    est.sizes.push_back(log.size());
  }
  return est;
}

struct GmmResult {
  double estimate = 0.0;
  double variance = 0.0;  // sum_m w_m^2 sigma2_(m)
  Vector weights;
};

/// Inverse-variance weights w_m proportional to 1 / sigma2_(m).
inline Vector optimal_gmm_weights(const StratifiedEstimate& est) {
  if (est.strata() < 1) throw DomainError("optimal_gmm_weights: no strata");
  Vector w(est.strata());
  for (Index m = 0; m < est.strata(); ++m) {
    if (!(est.sigma2(m) > 0.0)) throw DomainError("stratum variances must be positive");
    w(m) = 1.0 / est.sigma2(m);
  }
  return w / w.sum();
}

/// Weights proportional to stratum sizes (the pooled-sample special case).
inline Vector size_proportional_weights(const StratifiedEstimate& est) {
  Vector w(est.strata());
  for (Index m = 0; m < est.strata(); ++m) w(m) = static_cast<double>(est.sizes[static_cast<std::size_t>(m)]);
  return w / w.sum();
}

/// Weights (1' W 1)^{-1} 1' W for a positive semidefinite weight matrix W.
inline Vector gmm_weights_from_matrix(const Matrix& w_matrix) {
  if (w_matrix.rows() != w_matrix.cols() || w_matrix.rows() == 0) throw ShapeError("weight matrix must be square");
  const Vector row = w_matrix.transpose() * Vector::Ones(w_matrix.rows());
  const double denom = row.sum();
  if (!(std::abs(denom) > 0.0)) throw NumericalError("1' W 1 is zero");
  return row / denom;
}

/// Combined estimate sum_m w_m D_m with variance sum_m w_m^2 sigma2_(m).
/// Without weights the inverse-variance optimum is used.
inline GmmResult gmm_combine(const StratifiedEstimate& est, const std::optional<Vector>& weights = std::nullopt) {
  GmmResult out;
  if (weights) {
    if (weights->size() != est.strata()) throw ShapeError("gmm_combine: one weight per stratum required");
    double sum = 0.0;
    for (Index m = 0; m < weights->size(); ++m) {
      if ((*weights)(m) < -kSimplexTolerance) throw DomainError("gmm_combine: weights must be nonnegative");
      sum += (*weights)(m);
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) throw DomainError("gmm_combine: weights must sum to 1");
    out.weights = *weights;
  } else {
    out.weights = optimal_gmm_weights(est);
  }
  out.estimate = out.weights.dot(est.d_values);
  out.variance = out.weights.cwiseAbs2().dot(est.sigma2);
  return out;
}

/// {sum_m 1 / sigma2_(m)}^{-1}.
inline double var_ss(const StratifiedEstimate& est) {
  double inv = 0.0;
  for (Index m = 0; m < est.strata(); ++m) {
    if (!(est.sigma2(m) > 0.0)) throw DomainError("var_ss: stratum variances must be positive");
    inv += 1.0 / est.sigma2(m);
  }
  return 1.0 / inv;
}

/// Efficiency bound under mixture sampling: the bound with the mixture
/// propensity in the denominator.
inline double var_ms(const GroundTruth& truth, const PolicyMatrix& mixture, const PolicyMatrix& eval,
                     std::optional<double> theta0 = std::nullopt) {
  return semiparametric_bound(truth, mixture, eval, theta0);
}

/// Population stratified variances sigma2_(m) = (T / T_m) * bound(pi_b^(m))
/// evaluated on one shared covariate sample.
inline StratifiedEstimate population_stratified_variances(const GroundTruth& truth,
                                                          const std::vector<PolicyMatrix>& behaviors,
                                                          const PolicyMatrix& eval, const std::vector<Index>& sizes,
                                                          std::optional<double> theta0 = std::nullopt) {
  if (behaviors.size() != sizes.size() || behaviors.empty()) throw ShapeError("one size per behavior policy required");
  StratifiedEstimate est{Vector::Zero(static_cast<Index>(sizes.size())), Vector(static_cast<Index>(sizes.size())), sizes};
  const double total = static_cast<double>(est.total_size());
  for (std::size_t m = 0; m < behaviors.size(); ++m) {
    est.sigma2(static_cast<Index>(m)) =
        total / static_cast<double>(sizes[m]) * semiparametric_bound(truth, behaviors[m], eval, theta0);
  }
  return est;
}

// ---------------------------------------------------------------------------
// Two-logger comparison experiment

struct GmmExperimentConfig {
  Index size_a = 2000;
  Index size_b = 2000;
  std::size_t reps = 300;
  std::uint64_t seed = 0;
  // Logger A: (1 - eps) softmax(sharpness * g) + eps * uniform. Logger B: uniform.
  double sharpness = 2.0;
  double epsilon = 0.1;
  bool identical_loggers = false;  // both strata use logger B
  double ridge_lambda = 1.0;
  Index truth_sample = 200000;
  unsigned workers = worker_count();
};

struct GmmExperimentRow {
  std::string name;
  double rmse = 0.0;
  double sd = 0.0;
  double mean_error = 0.0;
};

/// Default evaluation policy pi_e(a) = a / sum_a' a' (1-based a).
inline Vector rank_proportional_row(int k) {
  Vector row(k);
  for (int a = 0; a < k; ++a) row(a) = a + 1.0;
  return row / row.sum();
}

inline PolicyFn sharpened_logger(const SyntheticSpec& spec, double sharpness, double epsilon) {
  return [spec, sharpness, epsilon](const Matrix& x) {
    const Matrix p = softmax_rows(sharpness * latent_logits(spec, x));
    return PolicyMatrix{(1.0 - epsilon) * p + Matrix::Constant(p.rows(), p.cols(), epsilon / 3.0),
                        PolicyKind::Fixed, {}};
  };
}

/// RMSE and SD over replications of four estimators on two-logger data:
/// AIPW on stratum A only, AIPW on stratum B only, pooled AIPW with the
/// mixture propensity, and the optimally weighted GMM combination.
inline std::vector<GmmExperimentRow> gmm_experiment(const GmmExperimentConfig& cfg) {
  if (cfg.size_a < 4 || cfg.size_b < 4) throw DomainError("gmm_experiment: stratum size must be at least 4");
  const SyntheticSpec spec = make_synthetic_spec(cfg.seed);
  const PolicyFn logger_b = uniform_policy_fn(3);
  const PolicyFn logger_a = cfg.identical_loggers ? logger_b : sharpened_logger(spec, cfg.sharpness, cfg.epsilon);
  const PolicyFn eval = constant_policy_fn(rank_proportional_row(3));

  // Population value from the exact conditional means on a large sample.
  const auto truth_full = gen_full_information(spec, cfg.truth_sample, derive_seed(cfg.seed, 0x7407));
  const double truth = (eval(truth_full.covariates).probs.cwiseProduct(truth_full.truth->f_star)).sum() /
                       static_cast<double>(cfg.truth_sample);

  const RidgeLearner learner{cfg.ridge_lambda};
  const auto per_rep = parallel_map(
      cfg.reps,
      [&](std::size_t r) {
        const std::uint64_t rs = derive_seed(cfg.seed, stream::kReplication + r);
        const auto logs = two_logger_sim(spec, cfg.size_a, cfg.size_b, logger_a, logger_b, rs);
        std::array<double, 4> v{};
        const std::uint64_t fit_seed = derive_seed(rs, 0xF17);
        for (int m = 0; m < 2; ++m) {
          const auto& log = logs.strata[static_cast<std::size_t>(m)];
          v[static_cast<std::size_t>(m)] = inner_value(eval(log.covariates), aipw_crossfit(log, learner, fit_seed));
        }
        // Pooled log with the mixture propensity.
        LoggedBanditData pooled;
        const auto& la = logs.strata[0];
        const auto& lb = logs.strata[1];
        pooled.num_actions = 3;
        pooled.covariates.resize(la.size() + lb.size(), la.dim());
        pooled.covariates << la.covariates, lb.covariates;
        pooled.rewards.resize(la.size() + lb.size());
        pooled.rewards << la.rewards, lb.rewards;
        pooled.actions = la.actions;
        pooled.actions.insert(pooled.actions.end(), lb.actions.begin(), lb.actions.end());
        pooled.behavior_props =
            mixture_propensity({logger_a(pooled.covariates), logger_b(pooled.covariates)}, {la.size(), lb.size()}).probs;
        v[2] = inner_value(eval(pooled.covariates), aipw_crossfit(pooled, learner, fit_seed));
        v[3] = gmm_combine(stratum_estimates(logs.strata, eval, learner, fit_seed)).estimate;
        return v;
      },
      cfg.workers);

  const char* names[] = {"AIPW_A", "AIPW_B", "MAIPW", "GMM"};
  std::vector<GmmExperimentRow> rows;
  for (std::size_t e = 0; e < 4; ++e) {
    double sum = 0.0, sq = 0.0;
    for (const auto& v : per_rep) {
      sum += v[e] - truth;
      sq += (v[e] - truth) * (v[e] - truth);
    }
    const double n = static_cast<double>(per_rep.size());
    const double mean = sum / n;
    double var = 0.0;
    for (const auto& v : per_rep) var += (v[e] - truth - mean) * (v[e] - truth - mean);
    rows.push_back({names[e], std::sqrt(sq / n), n > 1 ? std::sqrt(var / (n - 1)) : 0.0, mean});
  }
  return rows;
}

}  // namespace opelab
