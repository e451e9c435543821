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
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opelab/core.hpp"
#include "opelab/models.hpp"
#include "opelab/policies.hpp"
#include "opelab/rng.hpp"

namespace opelab {

/// Sample variance of the per-record values Z_t and the implied standard error.
struct VarianceReport {
  double empirical_variance = 0.0;
  double standard_error = 0.0;
};

/// Unbiased sample variance (two-pass) of z with SE = sqrt(var / T).
inline VarianceReport variance_of(const Vector& z) {
  const Index t = z.size();
  if (t < 2) throw DomainError("variance needs at least 2 records");
  const double mean = z.mean();
  double ss = 0.0;
  for (Index i = 0; i < t; ++i) ss += (z(i) - mean) * (z(i) - mean);
  const double var = ss / static_cast<double>(t - 1);
  return {var, std::sqrt(var / static_cast<double>(t))};
}

inline VarianceReport empirical_variance(const PolicyMatrix& policy, const ScoreMatrix& scores) {
  return variance_of(per_record_values(policy, scores));
}

struct Estimate {
  double value = 0.0;
  VarianceReport variance;
};

inline Estimate estimate(const PolicyMatrix& policy, const ScoreMatrix& scores) {
  return {inner_value(policy, scores), empirical_variance(policy, scores)};
}

// Throws OverlapError at the first record whose chosen-action propensity is
// below the floor.
inline void require_overlap(const LoggedBanditData& log, double floor) {
  if (log.behavior_props.rows() != log.size() || log.behavior_props.cols() != log.num_actions ||
      log.rewards.size() != log.size()) {
    throw ShapeError("log arrays have inconsistent shapes");
  }
  for (Index t = 0; t < log.size(); ++t) {
    const int a = log.actions[static_cast<std::size_t>(t)];
    if (a < 0 || a >= log.num_actions) throw DomainError("action out of range at record " + std::to_string(t));
    if (!(log.behavior_props(t, a) >= floor)) {
      throw OverlapError("chosen-action propensity " + std::to_string(log.behavior_props(t, a)) +
                         " below floor at record " + std::to_string(t));
    }
  }
}

// ---------------------------------------------------------------------------
// Score functions

/// Gamma_t(a) = 1[A_t = a] Y_t / pi_b(A_t | x_t).
inline ScoreMatrix scores_ipw(const LoggedBanditData& log, double floor = kDefaultPropensityFloor) {
  require_overlap(log, floor);
  ScoreMatrix s{Matrix::Zero(log.size(), log.num_actions), EstimatorTag::IPW};
  for (Index t = 0; t < log.size(); ++t) {
    const int a = log.actions[static_cast<std::size_t>(t)];
    s.scores(t, a) = log.rewards(t) / log.behavior_props(t, a);
  }
  return s;
}

/// Gamma_t(a) = f(a, x_t) from precomputed predictions.
inline ScoreMatrix scores_dm(const LoggedBanditData& log, const Matrix& predictions) {
  if (predictions.rows() != log.size() || predictions.cols() != log.num_actions) {
    throw ShapeError("scores_dm: prediction matrix does not match the log");
  }
  return {predictions, EstimatorTag::DM};
}

template <RewardModel M>
ScoreMatrix scores_dm(const LoggedBanditData& log, const M& model) {
  return scores_dm(log, Matrix(model.predict(log.covariates)));
}

namespace detail {

// One AIPW score row: prediction plus the IPW-weighted residual on the
// chosen action.
template <typename Pred, typename Out>
void aipw_row(const Pred& pred, int action, double reward, double propensity, Out&& out) {
  out = pred;
  out(action) = pred(action) + (reward - pred(action)) / propensity;
}

}  // namespace detail

/// Gamma_t(a) = 1[A_t = a](Y_t - f(a, x_t)) / pi_b(A_t | x_t) + f(a, x_t).
inline ScoreMatrix scores_aipw(const LoggedBanditData& log, const Matrix& predictions,
                               double floor = kDefaultPropensityFloor) {
  require_overlap(log, floor);
  if (predictions.rows() != log.size() || predictions.cols() != log.num_actions) {
    throw ShapeError("scores_aipw: prediction matrix does not match the log");
  }
  ScoreMatrix s{Matrix(log.size(), log.num_actions), EstimatorTag::AIPW};
  for (Index t = 0; t < log.size(); ++t) {
    const int a = log.actions[static_cast<std::size_t>(t)];
    detail::aipw_row(predictions.row(t), a, log.rewards(t), log.behavior_props(t, a), s.scores.row(t));
  }
  return s;
}

template <RewardModel M>
ScoreMatrix scores_aipw(const LoggedBanditData& log, const M& model, double floor = kDefaultPropensityFloor) {
  return scores_aipw(log, Matrix(model.predict(log.covariates)), floor);
}

/// Seeded two-fold split used for cross-fitting: a permutation whose first
/// ceil(T/2) entries form fold A.
inline std::pair<std::vector<Index>, std::vector<Index>> crossfit_folds(Index t, std::uint64_t seed) {
  Rng rng(seed);
  auto perm = rng.permutation(t);
  const auto half = static_cast<std::ptrdiff_t>((t + 1) / 2);
  return {std::vector<Index>(perm.begin(), perm.begin() + half),
          std::vector<Index>(perm.begin() + half, perm.end())};
}

/// Out-of-fold reward predictions: the model fit on one fold predicts the
/// other, returned in the original row order.
template <RewardLearner L>
Matrix crossfit_predictions(const LoggedBanditData& log, const L& learner, std::uint64_t seed) {
  if (log.size() < 4) throw DomainError("cross-fitting needs at least 4 records");
  const auto [fold_a, fold_b] = crossfit_folds(log.size(), seed);
  Matrix out(log.size(), log.num_actions);
  auto fit_and_fill = [&](const std::vector<Index>& train, const std::vector<Index>& test) {
    const LoggedBanditData tr = subset(log, train);
    const auto model = learner.fit(tr.covariates, tr.actions, tr.rewards, log.num_actions);
    const Matrix pred = model.predict(take_rows(log.covariates, test));
    for (std::size_t i = 0; i < test.size(); ++i) out.row(test[i]) = pred.row(static_cast<Index>(i));
  };
  fit_and_fill(fold_a, fold_b);
  fit_and_fill(fold_b, fold_a);
  return out;
}

template <RewardLearner L>
ScoreMatrix aipw_crossfit(const LoggedBanditData& log, const L& learner, std::uint64_t seed,
                          double floor = kDefaultPropensityFloor) {
  require_overlap(log, floor);
  return scores_aipw(log, crossfit_predictions(log, learner, seed), floor);
}

// ---------------------------------------------------------------------------
// Sequential estimators

/// Which quantity a sequential estimate targets.
enum class Estimand {
  PolicyValue,         // R(pi_e) for a fixed evaluation policy
  AveragePolicyValue,  // (1/T) sum_t R(pi_e_t) for a policy updated from history
  ConditionalValue,    // value of a policy frozen from a history log
};

struct SequentialEstimate {
  double value = 0.0;
  VarianceReport variance;
  ScoreMatrix scores;
  PolicyMatrix policy;  // rows actually used, one per period
  Estimand estimand = Estimand::PolicyValue;
};

/// Reward model consulted at period t and then told the period's outcome.
template <typename S>
concept SequentialRewardModel = requires(S& s, Index t, const Vector& x, int a, double y) {
  { s.predict(t, x) } -> std::convertible_to<Vector>;
  s.update(t, x, a, y);
};

/// Online ridge fed one record per period.
class OnlineRidgeSequence {
 public:
  OnlineRidgeSequence(Index dim, int num_actions, double lambda) : model_(dim, num_actions, lambda) {}
  Vector predict(Index, const Vector& x) const { return model_.predict_row(x); }
  void update(Index, const Vector& x, int a, double y) { model_.update(x, a, y); }
  const OnlineRidge& model() const { return model_; }

 private:
  OnlineRidge model_;
};

/// Frozen per-period predictions; updates are ignored.
class FrozenPredictions {
 public:
  explicit FrozenPredictions(Matrix predictions) : predictions_(std::move(predictions)) {}
  Vector predict(Index t, const Vector&) const { return predictions_.row(t).transpose(); }
  void update(Index, const Vector&, int, double) {}

 private:
  Matrix predictions_;
};

namespace detail {

template <typename RowFn, SequentialRewardModel S>
SequentialEstimate run_sequential(const LoggedBanditData& log, RowFn&& policy_row, S& model, double floor,
                                  Estimand estimand) {
  require_overlap(log, floor);
  const Index T = log.size();
  if (T < 1) throw DomainError("sequential estimate needs at least one record");
  SequentialEstimate out;
  out.estimand = estimand;
  out.scores = {Matrix(T, log.num_actions), EstimatorTag::A2IPW};
  Matrix rows(T, log.num_actions);
  std::vector<Index> periods(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const Vector x = log.covariates.row(t).transpose();
    const Vector pred = model.predict(t, x);
    if (pred.size() != log.num_actions) throw ShapeError("reward model returned the wrong width");
    const int a = log.actions[static_cast<std::size_t>(t)];
    aipw_row(pred.transpose(), a, log.rewards(t), log.behavior_props(t, a), out.scores.scores.row(t));
    rows.row(t) = policy_row(t);
    periods[static_cast<std::size_t>(t)] = t;
    model.update(t, x, a, log.rewards(t));
  }
  out.policy = sequential_policy(std::move(rows), std::move(periods));
  out.value = inner_value(out.policy, out.scores);
  out.variance = T >= 2 ? empirical_variance(out.policy, out.scores) : VarianceReport{};
  return out;
}

}  // namespace detail

/// Adaptive AIPW: period t is scored with a reward model that has seen only
/// records before t. Behavior propensities may vary by period.
template <SequentialRewardModel S>
SequentialEstimate a2ipw_estimate(const LoggedBanditData& log, const PolicyMatrix& eval_policy, S model,
                                  double floor = kDefaultPropensityFloor) {
  require_same_shape(eval_policy.probs, log.behavior_props, "a2ipw_estimate");
  return detail::run_sequential(
      log, [&](Index t) { return Vector(eval_policy.probs.row(t).transpose()); }, model, floor,
      Estimand::PolicyValue);
}

inline SequentialEstimate a2ipw_estimate(const LoggedBanditData& log, const PolicyMatrix& eval_policy,
                                         double lambda = 1.0, double floor = kDefaultPropensityFloor) {
  return a2ipw_estimate(log, eval_policy, OnlineRidgeSequence(log.dim(), log.num_actions, lambda), floor);
}

/// Average-policy-value AIPW. The updater maps the history before period t
/// (a HistoryView) to the evaluation row for x_t. The target is the average
/// of the per-period policy values, not the value of any single policy.
template <typename Updater, SequentialRewardModel S>
SequentialEstimate ap_estimate(const LoggedBanditData& log, Updater&& updater, S model,
                               double floor = kDefaultPropensityFloor) {
  return detail::run_sequential(
      log,
      [&](Index t) {
        Vector row = updater(HistoryView(log, t));
        if (row.size() != log.num_actions) throw ShapeError("policy updater returned the wrong width");
        double sum = 0.0;
        for (Index a = 0; a < row.size(); ++a) {
          if (!std::isfinite(row(a)) || row(a) < -kSimplexTolerance) {
            throw DomainError("policy updater returned a non-simplex row at period " + std::to_string(t));
          }
          sum += row(a);
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance) {
          throw DomainError("policy updater returned a non-simplex row at period " + std::to_string(t));
        }
        return row;
      },
      model, floor, Estimand::AveragePolicyValue);
}

template <typename Updater>
SequentialEstimate ap_estimate(const LoggedBanditData& log, Updater&& updater, double lambda = 1.0,
                               double floor = kDefaultPropensityFloor) {
  return ap_estimate(log, std::forward<Updater>(updater),
                     OnlineRidgeSequence(log.dim(), log.num_actions, lambda), floor);
}

struct ItopeResult {
  Estimate estimate;
  PolicyFn policy;     // evaluation policy frozen from the history log
  ScoreMatrix scores;  // AIPW scores on the future log
  Estimand estimand = Estimand::ConditionalValue;
};

/// Inter-temporal AIPW: the evaluation policy and the reward model are fit
/// on the history log only, then frozen and used to score the future log.
/// policy_learner(history) must return a PolicyFn.
template <typename PolicyLearner, RewardLearner L>
ItopeResult itope_estimate(const LoggedBanditData& history, const LoggedBanditData& future,
                           PolicyLearner&& policy_learner, const L& reward_learner,
                           double floor = kDefaultPropensityFloor) {
  if (history.size() == 0) throw DomainError("itope_estimate: empty history log");
  if (future.size() == 0) throw DomainError("itope_estimate: empty future log");
  if (history.num_actions != future.num_actions) throw ShapeError("itope_estimate: action counts differ");
  ItopeResult out;
  out.policy = policy_learner(history);
  const auto model = reward_learner.fit(history.covariates, history.actions, history.rewards, history.num_actions);
  out.scores = scores_aipw(future, model, floor);
  const PolicyMatrix pi = out.policy(future.covariates);
  out.estimate.value = inner_value(pi, out.scores);
  if (future.size() >= 2) out.estimate.variance = empirical_variance(pi, out.scores);
  return out;
}

// ---------------------------------------------------------------------------
// Efficiency bound

/// Sample average of sum_a pi_e^2 nu* / pi_b + (sum_a pi_e f* - theta0)^2.
/// theta0 defaults to the sample average of sum_a pi_e f*.
inline double semiparametric_bound(const Matrix& f_star, const Matrix& nu_star, const PolicyMatrix& behavior,
                                   const PolicyMatrix& eval, std::optional<double> theta0 = std::nullopt) {
  require_same_shape(f_star, nu_star, "semiparametric_bound");
  require_same_shape(f_star, behavior.probs, "semiparametric_bound");
  require_same_shape(f_star, eval.probs, "semiparametric_bound");
  const Index T = f_star.rows();
  if (T == 0) throw ShapeError("semiparametric_bound: empty sample");
  const Vector direct = eval.probs.cwiseProduct(f_star).rowwise().sum();
  const double theta = theta0 ? *theta0 : direct.mean();
  double total = 0.0;
  for (Index t = 0; t < T; ++t) {
    double term = 0.0;
    for (Index a = 0; a < f_star.cols(); ++a) {
      const double pe = eval.probs(t, a);
      if (pe == 0.0) continue;
      const double pb = behavior.probs(t, a);
      if (!(pb > 0.0)) {
        throw OverlapError("semiparametric_bound: behavior probability 0 where the evaluation policy is positive");
      }
      term += pe * pe * nu_star(t, a) / pb;
    }
    const double centered = direct(t) - theta;
    total += term + centered * centered;
  }
  return total / static_cast<double>(T);
}

inline double semiparametric_bound(const GroundTruth& truth, const PolicyMatrix& behavior,
                                   const PolicyMatrix& eval, std::optional<double> theta0 = std::nullopt) {
  return semiparametric_bound(truth.f_star, truth.nu_star, behavior, eval, theta0);
}

}  // namespace opelab
