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
#include <iterator>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace opelab {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error hierarchy. Everything thrown by the library derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Chosen-action propensity below the configured floor.
class OverlapError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Singular or ill-conditioned system, non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kDefaultPropensityFloor = 1e-6;
inline constexpr double kSimplexTolerance = 1e-9;

enum class PolicyKind { Fixed, Sequential };

/// Row-stochastic T x K matrix of action probabilities evaluated on a
/// covariate set. Sequential matrices carry the period each row was
/// computed for.
struct PolicyMatrix {
  Matrix probs;
  PolicyKind kind = PolicyKind::Fixed;
  std::vector<Index> periods;

  Index rows() const { return probs.rows(); }
  Index num_actions() const { return probs.cols(); }
};

enum class EstimatorTag { IPW, DM, AIPW, A2IPW };

inline const char* to_string(EstimatorTag tag) {
  switch (tag) {
    case EstimatorTag::IPW: return "IPW";
    case EstimatorTag::DM: return "DM";
    case EstimatorTag::AIPW: return "AIPW";
    case EstimatorTag::A2IPW: return "A2IPW";
  }
  return "?";
}

/// Per-record score vectors; every estimator here is (1/T) sum_t <pi(x_t), row_t>.
struct ScoreMatrix {
  Matrix scores;
  EstimatorTag tag = EstimatorTag::IPW;

  Index rows() const { return scores.rows(); }
  Index num_actions() const { return scores.cols(); }
};

/// Logged bandit feedback. Actions are 0-based in memory.
struct LoggedBanditData {
  Matrix covariates;              // T x d
  std::vector<int> actions;       // length T, in [0, K)
  Vector rewards;                 // length T
  Matrix behavior_props;          // T x K
  int num_actions = 0;
  std::optional<double> reward_bound;

  Index size() const { return static_cast<Index>(actions.size()); }
  Index dim() const { return covariates.cols(); }

  double chosen_propensity(Index t) const {
    return behavior_props(t, actions[static_cast<std::size_t>(t)]);
  }
};

/// Synthetic ground truth on a covariate sample: f*(a, x) and nu*(a, x).
struct GroundTruth {
  Matrix f_star;   // T x K conditional mean reward
  Matrix nu_star;  // T x K conditional reward variance
};

/// Covariates with every potential outcome Y_t(a) revealed.
struct FullInformationData {
  Matrix covariates;          // T x d
  Matrix potential_outcomes;  // T x K
  std::optional<GroundTruth> truth;

  Index size() const { return potential_outcomes.rows(); }
  Index num_actions() const { return potential_outcomes.cols(); }
};

// Throws DomainError unless every row of m is in the simplex within tol.
inline void require_simplex_rows(const Matrix& m, const std::string& what,
                                 double tol = kSimplexTolerance) {
  for (Index t = 0; t < m.rows(); ++t) {
    double sum = 0.0;
    for (Index a = 0; a < m.cols(); ++a) {
      const double v = m(t, a);
      if (!std::isfinite(v) || v < -tol) {
        throw DomainError(what + ": row " + std::to_string(t) + " has an invalid entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw DomainError(what + ": row " + std::to_string(t) + " sums to " + std::to_string(sum));
    }
  }
}

// ---------------------------------------------------------------------------
// Log validation

struct ValidationIssue {
  enum class Code {
    ShapeMismatch,
    ActionOutOfRange,
    NegativePropensity,
    SimplexViolation,
    OverlapViolation,
    RewardBoundExceeded,
    NonFiniteReward,
  };
  Code code;
  Index row = -1;
};

inline const char* to_string(ValidationIssue::Code code) {
  using C = ValidationIssue::Code;
  switch (code) {
    case C::ShapeMismatch: return "shape_mismatch";
    case C::ActionOutOfRange: return "action_out_of_range";
    case C::NegativePropensity: return "negative_propensity";
    case C::SimplexViolation: return "simplex_violation";
    case C::OverlapViolation: return "overlap_violation";
    case C::RewardBoundExceeded: return "reward_bound_exceeded";
    case C::NonFiniteReward: return "non_finite_reward";
  }
  return "?";
}

struct ValidationReport {
  bool ok = true;
  double min_chosen_propensity = std::numeric_limits<double>::infinity();
  double max_abs_reward = 0.0;
  // Set when the log declares no reward bound; such logs are accepted.
  bool unbounded_rewards = false;
  std::vector<ValidationIssue> issues;

  bool has(ValidationIssue::Code code) const {
    for (const auto& i : issues) {
      if (i.code == code) return true;
    }
    return false;
  }
};

/// Scans a log for simplex, overlap and reward-bound violations. Never throws.
inline ValidationReport validate_log(const LoggedBanditData& log,
                                     double floor = kDefaultPropensityFloor) {
  using C = ValidationIssue::Code;
  ValidationReport report;
  auto fail = [&](C code, Index row) {
    report.ok = false;
    report.issues.push_back({code, row});
  };

  const Index T = log.size();
  const Index K = log.num_actions;
  if (log.rewards.size() != T || log.behavior_props.rows() != T ||
      log.behavior_props.cols() != K || (log.covariates.rows() != T && log.covariates.size() != 0)) {
    fail(C::ShapeMismatch, -1);
    return report;
  }
  report.unbounded_rewards = !log.reward_bound.has_value();

  for (Index t = 0; t < T; ++t) {
    double sum = 0.0;
    bool negative = false;
    for (Index a = 0; a < K; ++a) {
      const double p = log.behavior_props(t, a);
      if (!(p >= 0.0)) negative = true;
      sum += p;
    }
    if (negative) fail(C::NegativePropensity, t);
    if (std::abs(sum - 1.0) > kSimplexTolerance) fail(C::SimplexViolation, t);

    const int a = log.actions[static_cast<std::size_t>(t)];
    if (a < 0 || a >= K) {
      fail(C::ActionOutOfRange, t);
    } else {
      const double p = log.behavior_props(t, a);
      report.min_chosen_propensity = std::min(report.min_chosen_propensity, p);
      if (!(p >= floor)) fail(C::OverlapViolation, t);
    }

    const double y = log.rewards(t);
    if (!std::isfinite(y)) {
      fail(C::NonFiniteReward, t);
      continue;
    }
    report.max_abs_reward = std::max(report.max_abs_reward, std::abs(y));
    if (log.reward_bound && std::abs(y) > *log.reward_bound) fail(C::RewardBoundExceeded, t);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Values

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

/// Z_t = <pi(x_t), Gamma_t> for every record.
inline Vector per_record_values(const PolicyMatrix& policy, const ScoreMatrix& scores) {
  require_same_shape(policy.probs, scores.scores, "per_record_values");
  return policy.probs.cwiseProduct(scores.scores).rowwise().sum();
}

/// (1/T) sum_t <pi(x_t), Gamma_t>.
inline double inner_value(const PolicyMatrix& policy, const ScoreMatrix& scores) {
  require_same_shape(policy.probs, scores.scores, "inner_value");
  if (policy.rows() == 0) throw ShapeError("inner_value: empty matrices");
  return per_record_values(policy, scores).sum() / static_cast<double>(policy.rows());
}

/// (1/T) sum_t sum_a pi(a|x_t) Y_t(a) on full-information data.
inline double true_policy_value(const FullInformationData& full, const PolicyMatrix& policy) {
  require_same_shape(policy.probs, full.potential_outcomes, "true_policy_value");
  if (full.size() == 0) throw ShapeError("true_policy_value: empty data");
  return policy.probs.cwiseProduct(full.potential_outcomes).sum() / static_cast<double>(full.size());
}

// Rows of a matrix selected by index list.
template <typename Derived, typename IndexRange>
Matrix take_rows(const Eigen::MatrixBase<Derived>& m, const IndexRange& rows) {
  Matrix out(static_cast<Index>(std::size(rows)), m.cols());
  Index i = 0;
  for (const auto r : rows) out.row(i++) = m.row(static_cast<Index>(r));
  return out;
}

/// Restriction of a log to a subset of its rows, in the given order.
template <typename IndexRange>
LoggedBanditData subset(const LoggedBanditData& log, const IndexRange& rows) {
  LoggedBanditData out;
  out.num_actions = log.num_actions;
  out.reward_bound = log.reward_bound;
  out.covariates = take_rows(log.covariates, rows);
  out.behavior_props = take_rows(log.behavior_props, rows);
  out.rewards.resize(static_cast<Index>(std::size(rows)));
  Index i = 0;
  for (const auto r : rows) {
    out.actions.push_back(log.actions[static_cast<std::size_t>(r)]);
    out.rewards(i++) = log.rewards(static_cast<Index>(r));
  }
  return out;
}

template <typename IndexRange>
PolicyMatrix subset(const PolicyMatrix& policy, const IndexRange& rows) {
  PolicyMatrix out;
  out.kind = policy.kind;
  out.probs = take_rows(policy.probs, rows);
  if (!policy.periods.empty()) {
    for (const auto r : rows) out.periods.push_back(policy.periods[static_cast<std::size_t>(r)]);
  }
  return out;
}

/// Read-only window on the first t records of a chronological log.
class HistoryView {
 public:
  HistoryView(const LoggedBanditData& log, Index t) : log_(&log), t_(t) {}

  Index size() const { return t_; }
  Index period() const { return t_; }
  int num_actions() const { return log_->num_actions; }
  auto covariates() const { return log_->covariates.topRows(t_); }
  auto rewards() const { return log_->rewards.head(t_); }
  int action(Index i) const { return log_->actions[static_cast<std::size_t>(i)]; }
  auto behavior_row(Index i) const { return log_->behavior_props.row(i); }
  // Covariate of the current period (the one being decided).
  auto current_covariate() const { return log_->covariates.row(t_); }
  LoggedBanditData materialize() const {
    std::vector<Index> rows(static_cast<std::size_t>(t_));
    for (Index i = 0; i < t_; ++i) rows[static_cast<std::size_t>(i)] = i;
    return subset(*log_, rows);
  }

 private:
  const LoggedBanditData* log_;
  Index t_;
};

}  // namespace opelab
