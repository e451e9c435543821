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
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "opelab/core.hpp"
#include "opelab/ingest.hpp"
#include "opelab/models.hpp"
#include "opelab/parallel.hpp"
#include "opelab/policies.hpp"
#include "opelab/rng.hpp"

namespace opelab {

// Stream tags for derive_seed; keep generators for different roles apart.
namespace stream {
inline constexpr std::uint64_t kSigns = 0x5157;
inline constexpr std::uint64_t kCovariates = 0xC0;
inline constexpr std::uint64_t kOutcomes = 0x0C;
inline constexpr std::uint64_t kActions = 0xAC;
inline constexpr std::uint64_t kReplication = 0x7E9;
}  // namespace stream

/// Three-action synthetic problem with standard-normal covariates and
/// softmax category probabilities
///   g1 = sum_d x_d,  g2 = sum_d W_d x_d^2,  g3 = sum_d W_d |x_d|.
struct SyntheticSpec {
  Index dim = 10;
  int num_actions = 3;
  Vector signs;  // W in {-1, +1}^dim, fixed by the generating seed
  std::uint64_t seed = 0;
};

inline SyntheticSpec make_synthetic_spec(std::uint64_t seed, Index dim = 10) {
  if (dim < 1) throw DomainError("synthetic dimension must be positive");
  SyntheticSpec spec;
  spec.dim = dim;
  spec.seed = seed;
  spec.signs.resize(dim);
  Rng rng(derive_seed(seed, stream::kSigns));
  for (Index d = 0; d < dim; ++d) spec.signs(d) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return spec;
}

inline Matrix latent_logits(const SyntheticSpec& spec, const Matrix& x) {
  if (x.cols() != spec.dim) throw ShapeError("latent_logits: covariate dimension mismatch");
  Matrix g(x.rows(), 3);
  g.col(0) = x.rowwise().sum();
  g.col(1) = x.array().square().matrix() * spec.signs;
  g.col(2) = x.cwiseAbs() * spec.signs;
  return g;
}

/// p(a | x) = softmax(g(., x)).
inline Matrix latent_probabilities(const SyntheticSpec& spec, const Matrix& x) {
  return softmax_rows(latent_logits(spec, x));
}

/// The exact conditional mean reward f*(a, x) = p(a | x) as a RewardModel.
struct SyntheticTruthModel {
  SyntheticSpec spec;
  Matrix predict(const Matrix& x) const { return latent_probabilities(spec, x); }
};

inline Matrix draw_standard_normal(Index rows, Index cols, Rng& rng) {
  Matrix x(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) x(i, j) = rng.normal();
  }
  return x;
}

/// Y_t(a) = 1[a = c_t] with one categorical draw c_t ~ p(. | x_t) per row.
/// Ground truth: f* = p, nu* = p (1 - p).
inline FullInformationData gen_full_information(const SyntheticSpec& spec, Index t, std::uint64_t seed) {
  if (t < 1) throw DomainError("gen_full_information: need at least one row");
  Rng cov_rng(derive_seed(seed, stream::kCovariates));
  Rng out_rng(derive_seed(seed, stream::kOutcomes));
  FullInformationData full;
  full.covariates = draw_standard_normal(t, spec.dim, cov_rng);
  const Matrix p = latent_probabilities(spec, full.covariates);
  full.potential_outcomes = Matrix::Zero(t, 3);
  for (Index i = 0; i < t; ++i) full.potential_outcomes(i, out_rng.categorical(p.row(i))) = 1.0;
  full.truth = GroundTruth{p, p.array() * (1.0 - p.array())};
  return full;
}

/// Samples A_t from each behavior row and reveals Y_t = Y_t(A_t).
inline LoggedBanditData make_bandit_feedback(const FullInformationData& full, const PolicyMatrix& behavior,
                                             std::uint64_t seed) {
  require_same_shape(full.potential_outcomes, behavior.probs, "make_bandit_feedback");
  require_simplex_rows(behavior.probs, "make_bandit_feedback: behavior policy");
  Rng rng(derive_seed(seed, stream::kActions));
  LoggedBanditData log;
  log.covariates = full.covariates;
  log.num_actions = static_cast<int>(full.num_actions());
  log.behavior_props = behavior.probs;
  log.rewards.resize(full.size());
  log.actions.reserve(static_cast<std::size_t>(full.size()));
  for (Index t = 0; t < full.size(); ++t) {
    const int a = rng.categorical(behavior.probs.row(t));
    log.actions.push_back(a);
    log.rewards(t) = full.potential_outcomes(t, a);
  }
  return log;
}

/// Like make_bandit_feedback, but the behavior row for period t is chosen
/// by updater(HistoryView) after seeing records 0..t-1.
template <typename BehaviorUpdater>
LoggedBanditData make_adaptive_feedback(const FullInformationData& full, BehaviorUpdater&& updater,
                                        std::uint64_t seed) {
  Rng rng(derive_seed(seed, stream::kActions));
  const Index T = full.size();
  const Index K = full.num_actions();
  LoggedBanditData log;
  log.covariates = full.covariates;
  log.num_actions = static_cast<int>(K);
  log.behavior_props = Matrix::Zero(T, K);
  log.rewards = Vector::Zero(T);
  log.actions.assign(static_cast<std::size_t>(T), 0);
  for (Index t = 0; t < T; ++t) {
    const Vector row = updater(HistoryView(log, t));
    if (row.size() != K) throw ShapeError("behavior updater returned the wrong width");
    log.behavior_props.row(t) = row.transpose();
    require_simplex_rows(log.behavior_props.row(t), "make_adaptive_feedback: behavior row");
    const int a = rng.categorical(row);
    log.actions[static_cast<std::size_t>(t)] = a;
    log.rewards(t) = full.potential_outcomes(t, a);
  }
  return log;
}

/// Full-information view of a labeled corpus: Y(a) = 1[a = label].
inline FullInformationData full_information_from_labels(const LabeledDataset& data) {
  FullInformationData full;
  full.covariates = data.features;
  full.potential_outcomes = Matrix::Zero(data.size(), data.class_count);
  for (Index i = 0; i < data.size(); ++i) {
    const int y = data.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= data.class_count) throw DomainError("label out of range at row " + std::to_string(i));
    full.potential_outcomes(i, y) = 1.0;
  }
  full.truth = GroundTruth{full.potential_outcomes, Matrix::Zero(data.size(), data.class_count)};
  return full;
}

inline std::pair<LoggedBanditData, FullInformationData> classification_to_bandit(const LabeledDataset& data,
                                                                                 const PolicyMatrix& behavior,
                                                                                 std::uint64_t seed) {
  FullInformationData full = full_information_from_labels(data);
  LoggedBanditData log = make_bandit_feedback(full, behavior, seed);
  return {std::move(log), std::move(full)};
}

/// Synthetic K-class corpus: x ~ N(0, I_d), labels drawn from a softmax over
/// per-class linear plus centered-quadratic scores.
inline LabeledDataset make_classification_corpus(Index n, Index d, int k, std::uint64_t seed,
                                                 double signal = 2.5) {
  if (n < 1 || d < 1 || k < 2) throw DomainError("make_classification_corpus: invalid sizes");
  Rng rng(seed);
  const double sd = signal / std::sqrt(static_cast<double>(d));
  Matrix linear(d, k), quad(d, k);
  for (Index j = 0; j < d; ++j) {
    for (int c = 0; c < k; ++c) {
      linear(j, c) = rng.normal(0.0, sd);
      quad(j, c) = rng.normal(0.0, 0.6 * sd);
    }
  }
  LabeledDataset data;
  data.class_count = k;
  data.features = draw_standard_normal(n, d, rng);
  const Matrix centered_sq = data.features.array().square() - 1.0;
  const Matrix probs = softmax_rows(data.features * linear + centered_sq * quad);
  for (Index i = 0; i < n; ++i) data.labels.push_back(rng.categorical(probs.row(i)));
  return data;
}

// ---------------------------------------------------------------------------
// In-sample bias experiment

struct BiasOptions {
  // Replace the trained policy with the uniform policy (no data dependence).
  bool uniform_eval = false;
  // l2 for the evaluation-policy fit; <= 0 means 1 / T1.
  double l2 = 0.0;
  unsigned workers = worker_count();
};

struct BiasRecord {
  double truth = 0.0;   // (1/T2) sum Y_t with actions drawn from the trained policy
  double error1 = 0.0;  // truth - in-sample plug-in value on the training set
  double error2 = 0.0;  // truth - plug-in value on an independent set
};

/// Trains a policy on S1, measures its value on S2 by simulation, and
/// compares with full-information plug-in values on S1 (in-sample) and S3.
inline std::vector<BiasRecord> bias_experiment(const SyntheticSpec& spec, Index t1, Index t2, Index t3,
                                               std::size_t reps, std::uint64_t seed,
                                               const BiasOptions& options = {}) {
  if (t1 < 1 || t2 < 1 || t3 < 1) throw DomainError("bias_experiment: sizes must be positive");
  const double l2 = options.l2 > 0.0 ? options.l2 : 1.0 / static_cast<double>(t1);
  return parallel_map(
      reps,
      [&](std::size_t r) {
        const std::uint64_t rep_seed = derive_seed(seed, stream::kReplication + r);
        const auto s1 = gen_full_information(spec, t1, derive_seed(rep_seed, 1));
        const auto s2 = gen_full_information(spec, t2, derive_seed(rep_seed, 2));
        const auto s3 = gen_full_information(spec, t3, derive_seed(rep_seed, 3));

        PolicyFn policy = uniform_policy_fn(3);
        if (!options.uniform_eval) {
          std::vector<int> labels(static_cast<std::size_t>(t1));
          for (Index i = 0; i < t1; ++i) {
            s1.potential_outcomes.row(i).maxCoeff(&labels[static_cast<std::size_t>(i)]);
          }
          std::vector<int> distinct(labels);
          std::sort(distinct.begin(), distinct.end());
          distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
          if (distinct.size() >= 2) {
            policy = logistic_policy_fn(fit_logistic_policy(s1.covariates, labels, 3, {}, l2));
          } else {
            Vector row = Vector::Zero(3);
            row(distinct.front()) = 1.0;
            policy = constant_policy_fn(row);
          }
        }

        const auto log2 = make_bandit_feedback(s2, policy(s2.covariates), derive_seed(rep_seed, 4));
        BiasRecord rec;
        rec.truth = log2.rewards.mean();
        rec.error1 = rec.truth - true_policy_value(s1, policy(s1.covariates));
        rec.error2 = rec.truth - true_policy_value(s3, policy(s3.covariates));
        return rec;
      },
      options.workers);
}

// ---------------------------------------------------------------------------
// Two-logger simulation

struct StratifiedLogs {
  std::vector<LoggedBanditData> strata;
  std::vector<FullInformationData> full;  // ground truth behind each stratum
};

/// Independent logs of sizes (ta, tb) from the same covariate/outcome
/// distribution under two behavior policies.
inline StratifiedLogs two_logger_sim(const SyntheticSpec& spec, Index ta, Index tb, const PolicyFn& policy_a,
                                     const PolicyFn& policy_b, std::uint64_t seed) {
  if (ta < 2 || tb < 2) throw DomainError("two_logger_sim: each stratum needs at least 2 records");
  StratifiedLogs out;
  const std::pair<Index, const PolicyFn*> strata[] = {{ta, &policy_a}, {tb, &policy_b}};
  std::uint64_t m = 0;
  for (const auto& [size, policy] : strata) {
    const std::uint64_t s = derive_seed(seed, m++);
    auto full = gen_full_information(spec, size, s);
    out.strata.push_back(make_bandit_feedback(full, (*policy)(full.covariates), s));
    out.full.push_back(std::move(full));
  }
  return out;
}

}  // namespace opelab
