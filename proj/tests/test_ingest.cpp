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

#include <algorithm>
#include <set>
#include <sstream>

#include "opelab/ingest.hpp"
#include "opelab/rng.hpp"

namespace opelab {
namespace {

ParsedLibsvm parse(const std::string& text, LibsvmOptions opts = {}) {
  std::istringstream in(text);
  return parse_libsvm(in, opts);
}

TEST(Libsvm, ReadsSparseLineDensely) {
  const auto p = parse("3 1:0.5 4:-1.25\n");
  ASSERT_EQ(p.data.size(), 1);
  ASSERT_EQ(p.data.dim(), 4);
  EXPECT_EQ(p.data.labels[0], 0);
  EXPECT_EQ(p.raw_labels, std::vector<double>{3.0});
  Eigen::RowVector4d expected(0.5, 0.0, 0.0, -1.25);
  EXPECT_EQ(p.data.features.row(0), expected);
}

TEST(Libsvm, RemapsLabelsInSortedOrder) {
  const auto p = parse("7 1:1\n-1 1:2\n3 2:1\n7 1:3\n");
  EXPECT_EQ(p.raw_labels, (std::vector<double>{-1.0, 3.0, 7.0}));
  EXPECT_EQ(p.data.labels, (std::vector<int>{2, 0, 1, 2}));
  EXPECT_EQ(p.data.class_count, 3);
}

TEST(Libsvm, SkipsBlankAndCommentLines) {
  const auto p = parse("# header\n\n1 1:1\n   \n# more\n2 2:2\n");
  EXPECT_EQ(p.data.size(), 2);
  EXPECT_EQ(p.data.dim(), 2);
}

TEST(Libsvm, DuplicateIndexNamesLine) {
  try {
    parse("1 1:1\n1 2:0.1 2:0.2\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()), "duplicate feature index 2 at line 2");
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Libsvm, RejectsMalformedInput) {
  EXPECT_THROW(parse("1 3:1 2:1\n"), ParseError);
  EXPECT_THROW(parse("x 1:1\n"), ParseError);
  EXPECT_THROW(parse("1 1:abc\n"), ParseError);
  EXPECT_THROW(parse("1 0:1\n"), ParseError);
  EXPECT_THROW(parse("1 1\n"), ParseError);
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("# only comments\n\n"), ParseError);
}

TEST(Libsvm, DimensionOverride) {
  EXPECT_EQ(parse("1 2:1\n", {5}).data.dim(), 5);
  EXPECT_EQ(parse("# dim=6\n1 2:1\n").data.dim(), 6);
  EXPECT_EQ(parse("# dim=6\n1 2:1\n", {3}).data.dim(), 3);
  EXPECT_THROW(parse("1 4:1\n", {3}), ParseError);
}

TEST(Libsvm, WriteThenParseIsIdentity) {
  Rng rng(4);
  LabeledDataset d;
  d.class_count = 4;
  d.features = Matrix::Zero(40, 7);
  for (Index i = 0; i < 40; ++i) {
    for (Index j = 0; j < 7; ++j) {
      if (rng.uniform() < 0.6) d.features(i, j) = rng.normal(0.0, 100.0);
    }
    d.labels.push_back(static_cast<int>(i % 4));
  }
  d.features.col(6).setZero();
  std::stringstream ss;
  write_libsvm(ss, d);
  const auto back = parse_libsvm(ss);
  EXPECT_EQ(back.data.labels, d.labels);
  EXPECT_EQ(back.data.dim(), 7);
  EXPECT_EQ(back.data.features, d.features);
}

TEST(Standardize, PopulationConvention) {
  LabeledDataset d;
  d.class_count = 2;
  d.features.resize(2, 1);
  d.features << 1, 3;
  d.labels = {0, 1};
  const auto s = standardize(d);
  EXPECT_DOUBLE_EQ(s.data.features(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(s.data.features(1, 0), 1.0);
}

TEST(Standardize, ConstantColumnKeepsUnitScale) {
  LabeledDataset d;
  d.class_count = 2;
  d.features = Matrix::Constant(3, 1, 5.0);
  d.labels = {0, 1, 0};
  const auto s = standardize(d);
  EXPECT_EQ(s.data.features, Matrix::Zero(3, 1));
  EXPECT_EQ(s.scaler.scale(0), 1.0);
}

TEST(Standardize, StoredScalerReproducesOutputExactly) {
  Rng rng(9);
  LabeledDataset d;
  d.class_count = 2;
  d.features.resize(100, 5);
  for (Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = rng.normal(3.0, 7.0);
  d.labels.assign(100, 0);
  const auto s = standardize(d);
  EXPECT_EQ(s.scaler.apply(d.features), s.data.features);
  for (Index j = 0; j < 5; ++j) {
    EXPECT_NEAR(s.data.features.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(s.data.features.col(j).squaredNorm() / 100.0, 1.0, 1e-12);
  }
}

LabeledDataset indexed(Index n) {
  LabeledDataset d;
  d.class_count = 1;
  d.features.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    d.features(i, 0) = static_cast<double>(i);
    d.labels.push_back(0);
  }
  return d;
}

TEST(Split, ReproducibleUnderSeed) {
  const auto d = indexed(10);
  const SplitPlan plan{7, {{SplitRole::BehaviorTrain, 4}, {SplitRole::Truth, 6}}};
  const auto a = split(d, plan);
  const auto b = split(d, plan);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a[i].features, b[i].features);
}

TEST(Split, PartitionsAreDisjointAndCover) {
  const auto d = indexed(10);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto parts = split(d, {seed, {{SplitRole::BehaviorTrain, 4}, {SplitRole::Truth, 6}}});
    std::set<double> seen;
    for (const auto& p : parts) {
      for (Index i = 0; i < p.size(); ++i) seen.insert(p.features(i, 0));
    }
    EXPECT_EQ(seen.size(), 10u);
  }
}

TEST(Split, StandardLayouts) {
  const auto d = indexed(5000);
  const auto parts = split(d, standard_split_plan(1));
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_EQ(parts[0].size(), 1000);
  EXPECT_EQ(parts[1].size(), 1000);
  EXPECT_EQ(parts[2].size(), 1000);
  EXPECT_EQ(parts[3].size(), 2000);
  const auto cv = split(d, cv_split_plan(1));
  EXPECT_EQ(cv[1].size(), 2000);
}

TEST(Split, RejectsOversizedOrEmptyPlans) {
  const auto d = indexed(10);
  EXPECT_THROW(split(d, {1, {{SplitRole::Ope, 11}}}), DomainError);
  EXPECT_THROW(split(d, {1, {{SplitRole::Ope, 0}}}), DomainError);
}

}  // namespace
}  // namespace opelab
