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

#include "opelab/policies.hpp"
#include "opelab/rng.hpp"
#include "test_util.hpp"

namespace opelab {
namespace {

struct FixedClassifier {
  Matrix probs;
  Matrix predict_proba(const Matrix& x) const {
    Matrix out(x.rows(), probs.cols());
    for (Index i = 0; i < x.rows(); ++i) out.row(i) = probs.row(i % probs.rows());
    return out;
  }
};

TEST(Uniform, EntriesAreOneOverK) {
  EXPECT_EQ(uniform_policy(5, 4).probs, Matrix::Constant(5, 4, 0.25));
  EXPECT_EQ(uniform_policy(3, 1).probs, Matrix::Ones(3, 1));
  const auto p = uniform_policy(10, 7);
  for (Index t = 0; t < 10; ++t) EXPECT_NEAR(p.probs.row(t).sum(), 1.0, 1e-12);
  EXPECT_THROW(uniform_policy(2, 0), DomainError);
}

TEST(Deterministic, OneHotAtPredictedClass) {
  FixedClassifier c{Eigen::RowVector3d(0.2, 0.5, 0.3)};
  const auto p = deterministic_from_classifier(c, Matrix::Zero(4, 1));
  for (Index t = 0; t < 4; ++t) EXPECT_EQ(p.probs.row(t), Eigen::RowVector3d(0, 1, 0));
  EXPECT_NO_THROW(require_simplex_rows(p.probs, "one-hot"));
}

TEST(Deterministic, TieGoesToLowestAction) {
  FixedClassifier c{Eigen::RowVector3d(0.4, 0.2, 0.4)};
  const auto p = deterministic_from_classifier(c, Matrix::Zero(1, 1));
  EXPECT_EQ(p.probs.row(0), Eigen::RowVector3d(1, 0, 0));
}

TEST(Mix, EndpointsAndInterior) {
  Matrix det(1, 3);
  det << 1, 0, 0;
  const PolicyMatrix d{det, PolicyKind::Fixed, {}};
  const auto u = uniform_policy(1, 3);
  EXPECT_EQ(mix(0.0, d, u).probs, u.probs);
  EXPECT_EQ(mix(1.0, d, u).probs, det);
  const auto m = mix(0.4, d, u);
  EXPECT_NEAR(m.probs(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(m.probs(0, 1), 0.2, 1e-15);
  EXPECT_NEAR(m.probs(0, 2), 0.2, 1e-15);
  EXPECT_THROW(mix(1.1, d, u), DomainError);
  EXPECT_THROW(mix(-0.1, d, u), DomainError);
}

TEST(Mix, MinimumEntryGuaranteesOverlap) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Index k = 2 + static_cast<Index>(rng.index(5));
    Matrix det = Matrix::Zero(10, k);
    for (Index t = 0; t < 10; ++t) det(t, static_cast<Index>(rng.index(static_cast<std::size_t>(k)))) = 1.0;
    const double alpha = rng.uniform(0.0, 0.999);
    const auto m = mix(alpha, {det, PolicyKind::Fixed, {}}, uniform_policy(10, k));
    EXPECT_GE(m.probs.minCoeff(), (1.0 - alpha) / static_cast<double>(k) - 1e-15);
    EXPECT_NO_THROW(require_simplex_rows(m.probs, "mix"));
  }
}

TEST(Sequential, CarriesPeriods) {
  const auto p = sequential_policy(Matrix::Constant(3, 2, 0.5), {0, 1, 2});
  EXPECT_EQ(p.kind, PolicyKind::Sequential);
  EXPECT_EQ(p.periods, (std::vector<Index>{0, 1, 2}));
  EXPECT_THROW(sequential_policy(Matrix::Constant(3, 2, 0.5), {0, 1}), ShapeError);
}

TEST(Constant, RejectsNonSimplexRow) {
  Vector row(2);
  row << 0.7, 0.7;
  EXPECT_THROW(constant_policy(row, 3), DomainError);
}

}  // namespace
}  // namespace opelab
