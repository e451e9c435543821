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

#include <functional>
#include <string>
#include <vector>

#include "opelab/core.hpp"
#include "opelab/models.hpp"

namespace opelab {

/// A policy as a function of covariates (evaluated into PolicyMatrix form).
using PolicyFn = std::function<PolicyMatrix(const Matrix&)>;

inline PolicyMatrix uniform_policy(Index rows, Index num_actions) {
  if (num_actions < 1) throw DomainError("uniform_policy: need at least one action");
  return {Matrix::Constant(rows, num_actions, 1.0 / static_cast<double>(num_actions)), PolicyKind::Fixed, {}};
}

/// Repeats one probability row for every covariate (context-free policy).
inline PolicyMatrix constant_policy(const Vector& row, Index rows) {
  Matrix m(rows, row.size());
  for (Index t = 0; t < rows; ++t) m.row(t) = row.transpose();
  require_simplex_rows(m, "constant_policy");
  return {std::move(m), PolicyKind::Fixed, {}};
}

/// One-hot rows at the argmax of each probability row; ties go to the
/// lowest action index.
inline PolicyMatrix argmax_policy(const Matrix& probs) {
  Matrix out = Matrix::Zero(probs.rows(), probs.cols());
  for (Index t = 0; t < probs.rows(); ++t) {
    Index best = 0;
    for (Index a = 1; a < probs.cols(); ++a) {
      if (probs(t, a) > probs(t, best)) best = a;
    }
    out(t, best) = 1.0;
  }
  return {std::move(out), PolicyKind::Fixed, {}};
}

/// Deterministic policy from a classifier's predicted class probabilities.
template <typename Classifier>
PolicyMatrix deterministic_from_classifier(const Classifier& model, const Matrix& x) {
  return argmax_policy(model.predict_proba(x));
}

/// Softmax outputs of a classifier used directly as a stochastic policy.
template <typename Classifier>
PolicyMatrix stochastic_from_classifier(const Classifier& model, const Matrix& x) {
  return {model.predict_proba(x), PolicyKind::Fixed, {}};
}

/// Row-wise alpha * det + (1 - alpha) * unif.
inline PolicyMatrix mix(double alpha, const PolicyMatrix& det, const PolicyMatrix& unif) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("mix: alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  require_same_shape(det.probs, unif.probs, "mix");
  return {alpha * det.probs + (1.0 - alpha) * unif.probs, PolicyKind::Fixed, {}};
}

/// Wraps per-period rows computed from history into a Sequential matrix.
inline PolicyMatrix sequential_policy(Matrix rows, std::vector<Index> periods) {
  if (static_cast<Index>(periods.size()) != rows.rows()) {
    throw ShapeError("sequential_policy: one period index per row required");
  }
  require_simplex_rows(rows, "sequential_policy");
  return {std::move(rows), PolicyKind::Sequential, std::move(periods)};
}

// PolicyFn adapters.

inline PolicyFn uniform_policy_fn(Index num_actions) {
  return [num_actions](const Matrix& x) { return uniform_policy(x.rows(), num_actions); };
}

inline PolicyFn constant_policy_fn(Vector row) {
  return [row = std::move(row)](const Matrix& x) { return constant_policy(row, x.rows()); };
}

inline PolicyFn logistic_policy_fn(LogisticPolicyModel model) {
  return [model = std::move(model)](const Matrix& x) { return stochastic_from_classifier(model, x); };
}

inline PolicyFn deterministic_policy_fn(LogisticPolicyModel model) {
  return [model = std::move(model)](const Matrix& x) { return deterministic_from_classifier(model, x); };
}

}  // namespace opelab
