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

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "opelab/core.hpp"
#include "opelab/estimators.hpp"
#include "opelab/game.hpp"
#include "opelab/inference.hpp"
#include "opelab/ingest.hpp"
#include "opelab/models.hpp"
#include "opelab/parallel.hpp"
#include "opelab/policies.hpp"
#include "opelab/synthetic.hpp"

namespace opelab {

/// Estimates of L candidate policies by E estimators, plus the E x E
/// covariance used by the weighted criterion.
struct CandidateTable {
  Matrix values;  // L x E
  Matrix sigma;   // E x E
  std::vector<std::string> estimator_names;

  Index candidates() const { return values.rows(); }
  Index estimators() const { return values.cols(); }
};

/// Index of the largest entry; ties go to the lowest index.
inline Index argmax_first(const Vector& v) {
  if (v.size() == 0) throw ShapeError("argmax over an empty vector");
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

namespace detail {

inline void require_table(const Matrix& values) {
  if (values.rows() < 1 || values.cols() < 1) throw ShapeError("candidate table must be nonempty");
  if (!values.allFinite()) throw DomainError("candidate table entries must be finite");
}

}  // namespace detail

inline Index criterion_mean(const Matrix& values) {
  detail::require_table(values);
  return argmax_first(values.rowwise().mean());
}

inline Index criterion_weighted(const Matrix& values, const Matrix& sigma) {
  detail::require_table(values);
  if (sigma.rows() != values.cols()) throw ShapeError("covariance size must equal the estimator count");
  return argmax_first(values * efficient_weights(sigma));
}

inline Index criterion_minimax(const Matrix& values) {
  detail::require_table(values);
  return argmax_first(values.rowwise().minCoeff());
}

inline Index criterion_maxmax(const Matrix& values) {
  detail::require_table(values);
  return argmax_first(values.rowwise().maxCoeff());
}

struct MixSelection {
  GameSolution game;
  Index selected = 0;  // heaviest component of p*
};

inline MixSelection criterion_mix(const Matrix& values) {
  detail::require_table(values);
  MixSelection out;
  out.game = solve_zero_sum(values);
  out.selected = argmax_first(out.game.p_star);
  return out;
}

/// Builds C[l][e] = <pi_l, Gamma_e> and solves the selection game.
inline MixSelection criterion_mix(const std::vector<ScoreMatrix>& scores, const std::vector<PolicyMatrix>& policies) {
  if (scores.empty() || policies.empty()) throw ShapeError("criterion_mix: need at least one policy and estimator");
  Matrix c(static_cast<Index>(policies.size()), static_cast<Index>(scores.size()));
  for (std::size_t l = 0; l < policies.size(); ++l) {
    for (std::size_t e = 0; e < scores.size(); ++e) {
      c(static_cast<Index>(l), static_cast<Index>(e)) = inner_value(policies[l], scores[e]);
    }
  }
  return criterion_mix(c);
}

/// Best true value minus the selected candidate's true value.
inline double regret(Index selected, const Vector& true_values) {
  if (selected < 0 || selected >= true_values.size()) throw DomainError("regret: selected index out of range");
  return true_values.maxCoeff() - true_values(selected);
}

/// Expected regret of picking a candidate uniformly at random.
inline double uniform_selection_regret(const Vector& true_values) {
  if (true_values.size() == 0) throw ShapeError("uniform_selection_regret: no candidates");
  return true_values.maxCoeff() - true_values.mean();
}

// ---------------------------------------------------------------------------
// Criteria as data

enum class CriterionKind { Single, Mean, Weighted, Minimax, Mix, Maxmax };

struct Criterion {
  std::string name;
  CriterionKind kind = CriterionKind::Mean;
  Index estimator = 0;  // column used by Single
};

struct Selection {
  Index selected = 0;
  std::optional<GameSolution> game;
};

inline Selection apply_criterion(const CandidateTable& table, const Criterion& c) {
  switch (c.kind) {
    case CriterionKind::Single:
      if (c.estimator < 0 || c.estimator >= table.estimators()) throw DomainError("criterion estimator out of range");
      return {argmax_first(table.values.col(c.estimator)), std::nullopt};
    case CriterionKind::Mean: return {criterion_mean(table.values), std::nullopt};
    case CriterionKind::Weighted: return {criterion_weighted(table.values, table.sigma), std::nullopt};
    case CriterionKind::Minimax: return {criterion_minimax(table.values), std::nullopt};
    case CriterionKind::Maxmax: return {criterion_maxmax(table.values), std::nullopt};
    case CriterionKind::Mix: {
      auto mix = criterion_mix(table.values);
      return {mix.selected, mix.game};
    }
  }
  throw DomainError("unknown criterion");
}

/// One column per estimator followed by the four aggregate criteria.
inline std::vector<Criterion> table_criteria(const std::vector<std::string>& estimator_names) {
  std::vector<Criterion> out;
  for (std::size_t e = 0; e < estimator_names.size(); ++e) {
    out.push_back({estimator_names[e], CriterionKind::Single, static_cast<Index>(e)});
  }
  out.push_back({"MEAN", CriterionKind::Mean, 0});
  out.push_back({"Minimax", CriterionKind::Minimax, 0});
  out.push_back({"Mix", CriterionKind::Mix, 0});
  out.push_back({"Maxmax", CriterionKind::Maxmax, 0});
  return out;
}

// ---------------------------------------------------------------------------
// Building tables

/// Score-matrix estimator applied to a log; the seed feeds any internal
/// cross-fitting or cross-validation.
struct EstimatorSpec {
  std::string name;
  std::function<ScoreMatrix(const LoggedBanditData&, std::uint64_t)> scores;
};

inline std::vector<EstimatorSpec> default_estimators(double floor = kDefaultPropensityFloor) {
  return {
      {"IPW", [floor](const LoggedBanditData& log, std::uint64_t) { return scores_ipw(log, floor); }},
      {"DM LR",
       [](const LoggedBanditData& log, std::uint64_t) {
         return scores_dm(log, RidgeLearner{}.fit(log.covariates, log.actions, log.rewards, log.num_actions));
       }},
      {"DM KR",
       [](const LoggedBanditData& log, std::uint64_t seed) {
         return scores_dm(log, KernelRidgeCVLearner{CVGrid{}, seed}.fit(log.covariates, log.actions, log.rewards,
                                                                         log.num_actions));
       }},
      {"AIPW",
       [floor](const LoggedBanditData& log, std::uint64_t seed) {
         return aipw_crossfit(log, KernelRidgeCVLearner{CVGrid{}, derive_seed(seed, 1)}, seed, floor);
       }},
  };
}

/// Sigma is the covariance of (Z_t^(1), ..., Z_t^(E)) divided by T,
/// averaged over candidates.
inline CandidateTable build_table(const std::vector<PolicyMatrix>& policies, const std::vector<ScoreMatrix>& scores,
                                  std::vector<std::string> names = {}) {
  if (policies.empty() || scores.empty()) throw ShapeError("build_table: need candidates and estimators");
  const auto L = static_cast<Index>(policies.size());
  const auto E = static_cast<Index>(scores.size());
  const Index T = scores.front().rows();
  CandidateTable table;
  table.values.resize(L, E);
  table.sigma = Matrix::Zero(E, E);
  for (Index l = 0; l < L; ++l) {
    Matrix z(T, E);
    for (Index e = 0; e < E; ++e) {
      z.col(e) = per_record_values(policies[static_cast<std::size_t>(l)], scores[static_cast<std::size_t>(e)]);
    }
    const Eigen::RowVectorXd mean = z.colwise().mean();
    table.values.row(l) = mean;
    if (T >= 2) {
      const Matrix centered = z.rowwise() - mean;
      table.sigma += (centered.transpose() * centered) / (static_cast<double>(T - 1) * static_cast<double>(T));
    }
  }
  table.sigma /= static_cast<double>(L);
  if (names.empty()) {
    for (const auto& s : scores) names.emplace_back(to_string(s.tag));
  }
  table.estimator_names = std::move(names);
  return table;
}

inline CandidateTable evaluate_candidates(const std::vector<PolicyFn>& candidates, const LoggedBanditData& log,
                                          const std::vector<EstimatorSpec>& estimators, std::uint64_t seed) {
  std::vector<PolicyMatrix> policies;
  for (const auto& c : candidates) policies.push_back(c(log.covariates));
  std::vector<ScoreMatrix> scores;
  std::vector<std::string> names;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    scores.push_back(estimators[e].scores(log, derive_seed(seed, e)));
    names.push_back(estimators[e].name);
  }
  return build_table(policies, scores, std::move(names));
}

inline Vector candidate_true_values(const std::vector<PolicyFn>& candidates, const FullInformationData& truth) {
  Vector v(static_cast<Index>(candidates.size()));
  for (std::size_t l = 0; l < candidates.size(); ++l) {
    v(static_cast<Index>(l)) = true_policy_value(truth, candidates[l](truth.covariates));
  }
  return v;
}

/// Every column replaced by the true values; Sigma becomes the identity.
inline CandidateTable oracle_table(const Vector& true_values, std::vector<std::string> names) {
  const auto E = static_cast<Index>(names.size());
  CandidateTable t;
  t.values = true_values.replicate(1, E);
  t.sigma = Matrix::Identity(E, E);
  t.estimator_names = std::move(names);
  return t;
}

// ---------------------------------------------------------------------------
// Protocols

/// Fits a candidate evaluation policy on labeled data.
struct CandidateLearner {
  std::string name;
  std::function<PolicyFn(const LabeledDataset&)> fit;
};

struct CandidateSpec {
  std::string name;
  FeatureMapSpec map;
  double l2 = 1.0;
};

/// Three feature maps times two l2 strengths.
inline std::vector<CandidateSpec> default_candidate_specs(std::uint64_t seed) {
  std::vector<CandidateSpec> out;
  const std::pair<FeatureMapKind, const char*> maps[] = {
      {FeatureMapKind::Linear, "linear"}, {FeatureMapKind::Poly2, "poly2"}, {FeatureMapKind::RbfRandom, "rbf"}};
  for (const auto& [kind, label] : maps) {
    for (double l2 : {0.01, 1.0}) {
      FeatureMapSpec map;
      map.kind = kind;
      map.seed = seed;
      out.push_back({std::string(label) + "_l2=" + (l2 < 0.1 ? "0.01" : "1"), map, l2});
    }
  }
  return out;
}

inline std::vector<CandidateLearner> logistic_learners(const std::vector<CandidateSpec>& specs) {
  std::vector<CandidateLearner> out;
  for (const auto& s : specs) {
    out.push_back({s.name, [s](const LabeledDataset& d) {
                     return logistic_policy_fn(fit_logistic_policy(d.features, d.labels, d.class_count, s.map, s.l2));
                   }});
  }
  return out;
}

inline std::vector<PolicyFn> fit_candidates(const std::vector<CandidateLearner>& learners, const LabeledDataset& data) {
  std::vector<PolicyFn> out;
  for (const auto& l : learners) out.push_back(l.fit(data));
  return out;
}

struct ProtocolOptions {
  bool oracle_table = false;
};

struct ProtocolResult {
  std::vector<std::string> criteria;
  std::vector<Index> selected;
  Vector regret;
  Vector true_values;
  double uniform_regret = 0.0;
  CandidateTable table;
  std::optional<GameSolution> mix;  // present when a Mix criterion ran
  // Set by ISOPE: candidates were trained on the rows they are evaluated on.
  bool in_sample_caveat = false;
};

inline ProtocolResult select_and_score(CandidateTable table, const Vector& true_values,
                                       const std::vector<Criterion>& criteria, const ProtocolOptions& options) {
  if (options.oracle_table) table = oracle_table(true_values, table.estimator_names);
  ProtocolResult r;
  r.true_values = true_values;
  r.uniform_regret = uniform_selection_regret(true_values);
  r.regret.resize(static_cast<Index>(criteria.size()));
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Selection s = apply_criterion(table, criteria[i]);
    r.criteria.push_back(criteria[i].name);
    r.selected.push_back(s.selected);
    r.regret(static_cast<Index>(i)) = regret(s.selected, true_values);
    if (s.game) r.mix = s.game;
  }
  r.table = std::move(table);
  return r;
}

/// Candidates fit on `train`, estimated on an independent log, scored on
/// an independent truth set.
inline ProtocolResult run_ope2d(const LabeledDataset& train, const LoggedBanditData& eval_log,
                                const FullInformationData& truth, const std::vector<CandidateLearner>& learners,
                                const std::vector<EstimatorSpec>& estimators, const std::vector<Criterion>& criteria,
                                std::uint64_t seed, const ProtocolOptions& options = {}) {
  if (train.size() < 1 || eval_log.size() < 4 || truth.size() < 1) throw DomainError("run_ope2d: undersized split");
  if (learners.empty()) throw DomainError("run_ope2d: no candidate learners");
  const auto candidates = fit_candidates(learners, train);
  return select_and_score(evaluate_candidates(candidates, eval_log, estimators, seed),
                          candidate_true_values(candidates, truth), criteria, options);
}

/// Candidates fit and estimated on the same rows: `log` must be the bandit
/// view of `data`.
inline ProtocolResult run_isope(const LabeledDataset& data, const LoggedBanditData& log,
                                const FullInformationData& truth, const std::vector<CandidateLearner>& learners,
                                const std::vector<EstimatorSpec>& estimators, const std::vector<Criterion>& criteria,
                                std::uint64_t seed, const ProtocolOptions& options = {}) {
  if (data.size() < 4) throw DomainError("run_isope: undersized dataset");
  if (log.size() != data.size() || log.covariates != data.features) {
    throw ShapeError("run_isope: the log must be drawn on the training rows");
  }
  ProtocolResult r = run_ope2d(data, log, truth, learners, estimators, criteria, seed, options);
  r.in_sample_caveat = true;
  return r;
}

/// Two-fold cross-validated selection. Folds default to a seeded split.
/// The selected learner is refit on all rows before scoring.
inline ProtocolResult run_opcv(const LabeledDataset& data, const LoggedBanditData& log,
                               const FullInformationData& truth, const std::vector<CandidateLearner>& learners,
                               const std::vector<EstimatorSpec>& estimators, const std::vector<Criterion>& criteria,
                               std::uint64_t seed, const ProtocolOptions& options = {},
                               std::optional<std::pair<std::vector<Index>, std::vector<Index>>> folds = std::nullopt) {
  if (data.size() < 8) throw DomainError("run_opcv: cross-validation needs at least 8 rows");
  if (log.size() != data.size()) throw ShapeError("run_opcv: the log must be drawn on the cross-validation rows");
  if (learners.empty()) throw DomainError("run_opcv: no candidate learners");
  const auto [fold_a, fold_b] = folds ? *folds : crossfit_folds(data.size(), derive_seed(seed, 0xF0));
  if (fold_a.size() < 4 || fold_b.size() < 4) throw DomainError("run_opcv: undersized folds");

  const std::uint64_t est_seed = derive_seed(seed, 0xE5);
  const auto fit_a = fit_candidates(learners, subset(data, fold_a));
  const auto fit_b = fit_candidates(learners, subset(data, fold_b));
  CandidateTable t1 = evaluate_candidates(fit_a, subset(log, fold_b), estimators, est_seed);
  const CandidateTable t2 = evaluate_candidates(fit_b, subset(log, fold_a), estimators, est_seed);
  t1.values = 0.5 * (t1.values + t2.values);
  t1.sigma = 0.5 * (t1.sigma + t2.sigma);

  const auto refit = fit_candidates(learners, data);
  return select_and_score(std::move(t1), candidate_true_values(refit, truth), criteria, options);
}

// ---------------------------------------------------------------------------
// Classification-to-bandit selection experiment

enum class BepsMode { Ope2d, Isope, Opcv };

inline const char* to_string(BepsMode m) {
  switch (m) {
    case BepsMode::Ope2d: return "ope2d";
    case BepsMode::Isope: return "isope";
    case BepsMode::Opcv: return "opcv";
  }
  return "?";
}

struct BepsConfig {
  BepsMode mode = BepsMode::Ope2d;
  std::vector<double> alphas{0.7, 0.4, 0.0};
  std::size_t reps = 100;
  std::uint64_t seed = 0;
  bool oracle_table = false;
  // Appends the covariance-weighted criterion after the standard columns.
  bool weighted_column = false;
  Index behavior_train = 1000;
  Index eval_train = 1000;
  Index ope = 1000;
  Index truth = 2000;
  Index cv = 2000;
  unsigned workers = worker_count();
};

struct BepsRow {
  double alpha = 0.0;
  Matrix regrets;         // reps x criteria
  Vector uniform_regret;  // per rep
  Vector mean() const { return regrets.colwise().mean(); }
  Vector sd() const {
    const Index n = regrets.rows();
    if (n < 2) return Vector::Zero(regrets.cols());
    const Matrix centered = regrets.rowwise() - regrets.colwise().mean();
    return (centered.colwise().squaredNorm() / static_cast<double>(n - 1)).transpose().cwiseSqrt();
  }
};

struct BepsTable {
  std::vector<std::string> columns;
  std::vector<BepsRow> rows;
};

/// Behavior mixtures alpha * pi_d + (1 - alpha) * pi_u with pi_d a linear
/// logistic classifier; six logistic candidates; regret per criterion.
inline BepsTable run_beps(const LabeledDataset& corpus, const BepsConfig& cfg) {
  if (cfg.reps < 1) throw DomainError("reps must be at least 1");
  if (cfg.alphas.empty()) throw DomainError("at least one alpha is required");
  for (double a : cfg.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  }
  if (corpus.class_count < 2) throw DomainError("corpus needs at least 2 classes");

  const auto estimators = default_estimators();
  std::vector<std::string> names;
  for (const auto& e : estimators) names.push_back(e.name);
  auto criteria = table_criteria(names);
  if (cfg.weighted_column) criteria.push_back({"Weighted", CriterionKind::Weighted, 0});
  const Index A = static_cast<Index>(cfg.alphas.size());
  const Index C = static_cast<Index>(criteria.size());
  const int K = corpus.class_count;
  const ProtocolOptions options{cfg.oracle_table};

  struct RepOut {
    Matrix regrets;  // alphas x criteria
    Vector uniform;
  };
  const auto reps = parallel_map(
      cfg.reps,
      [&](std::size_t r) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, stream::kReplication + r);
        const SplitPlan plan = cfg.mode == BepsMode::Opcv
                                   ? SplitPlan{derive_seed(rep_seed, 1),
                                               {{SplitRole::BehaviorTrain, cfg.behavior_train},
                                                {SplitRole::Cv, cfg.cv},
                                                {SplitRole::Truth, cfg.truth}}}
                                   : SplitPlan{derive_seed(rep_seed, 1),
                                               {{SplitRole::BehaviorTrain, cfg.behavior_train},
                                                {SplitRole::EvalTrain, cfg.eval_train},
                                                {SplitRole::Ope, cfg.ope},
                                                {SplitRole::Truth, cfg.truth}}};
        const auto parts = split(corpus, plan);
        const LabeledDataset& behavior_set = parts[0];
        const FullInformationData truth = full_information_from_labels(parts.back());

        const FeatureMapSpec linear{};
        const double l2 = cv_logistic(behavior_set.features, behavior_set.labels, K, linear, CVGrid{},
                                      derive_seed(rep_seed, 2))
                              .best.lambda;
        const PolicyFn det = deterministic_policy_fn(
            fit_logistic_policy(behavior_set.features, behavior_set.labels, K, linear, l2));
        const auto learners = logistic_learners(default_candidate_specs(derive_seed(rep_seed, 3)));

        // Logged rows: the OPE partition, or the candidate-training rows
        // themselves for ISOPE, or the CV partition.
        const LabeledDataset& logged = cfg.mode == BepsMode::Ope2d ? parts[2] : parts[1];
        const LabeledDataset& train = parts[1];

        // Candidate fits do not depend on alpha.
        std::vector<PolicyFn> fitted, fit_a, fit_b;
        std::pair<std::vector<Index>, std::vector<Index>> folds;
        Vector truth_values;
        if (cfg.mode == BepsMode::Opcv) {
          folds = crossfit_folds(train.size(), derive_seed(rep_seed, 4));
          fit_a = fit_candidates(learners, subset(train, folds.first));
          fit_b = fit_candidates(learners, subset(train, folds.second));
        }
        fitted = fit_candidates(learners, train);
        truth_values = candidate_true_values(fitted, truth);

        RepOut out{Matrix(A, C), Vector(A)};
        for (Index i = 0; i < A; ++i) {
          const double alpha = cfg.alphas[static_cast<std::size_t>(i)];
          const PolicyMatrix behavior =
              mix(alpha, det(logged.features), uniform_policy(logged.size(), K));
          const LoggedBanditData log =
              classification_to_bandit(logged, behavior, derive_seed(rep_seed, 100 + static_cast<std::uint64_t>(i)))
                  .first;
          const std::uint64_t est_seed = derive_seed(rep_seed, 200 + static_cast<std::uint64_t>(i));
          CandidateTable table;
          if (cfg.mode == BepsMode::Opcv) {
            if (!cfg.oracle_table) {
              table = evaluate_candidates(fit_a, subset(log, folds.second), estimators, est_seed);
              const CandidateTable t2 = evaluate_candidates(fit_b, subset(log, folds.first), estimators, est_seed);
              table.values = 0.5 * (table.values + t2.values);
              table.sigma = 0.5 * (table.sigma + t2.sigma);
            }
          } else if (!cfg.oracle_table) {
            table = evaluate_candidates(fitted, log, estimators, est_seed);
          }
          if (cfg.oracle_table) table.estimator_names = names;
          const ProtocolResult res = select_and_score(std::move(table), truth_values, criteria, options);
          out.regrets.row(i) = res.regret.transpose();
          out.uniform(i) = res.uniform_regret;
        }
        return out;
      },
      cfg.workers);

  BepsTable table;
  for (const auto& c : criteria) table.columns.push_back(c.name);
  for (Index i = 0; i < A; ++i) {
    BepsRow row;
    row.alpha = cfg.alphas[static_cast<std::size_t>(i)];
    row.regrets.resize(static_cast<Index>(cfg.reps), C);
    row.uniform_regret.resize(static_cast<Index>(cfg.reps));
    for (std::size_t r = 0; r < cfg.reps; ++r) {
      row.regrets.row(static_cast<Index>(r)) = reps[r].regrets.row(i);
      row.uniform_regret(static_cast<Index>(r)) = reps[r].uniform(i);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace opelab
