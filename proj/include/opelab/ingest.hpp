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
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "opelab/core.hpp"
#include "opelab/rng.hpp"

namespace opelab {

/// Dense classification corpus. Labels are 0-based class indices in memory.
struct LabeledDataset {
  Matrix features;          // N x d
  std::vector<int> labels;  // length N, in [0, K)
  int class_count = 0;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index dim() const { return features.cols(); }
};

template <typename IndexRange>
LabeledDataset subset(const LabeledDataset& data, const IndexRange& rows) {
  LabeledDataset out;
  out.class_count = data.class_count;
  out.features = take_rows(data.features, rows);
  for (const auto r : rows) out.labels.push_back(data.labels[static_cast<std::size_t>(r)]);
  return out;
}

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : Error(message + " at line " + std::to_string(line)), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LibsvmOptions {
  // Overrides the inferred dimension (max index seen). A `# dim=<d>` header
  // line in the file has the same effect; this option wins over the header.
  std::optional<Index> dimension;
};

struct ParsedLibsvm {
  LabeledDataset data;
  // raw_labels[k] is the file label mapped to class k (sorted distinct order).
  std::vector<double> raw_labels;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), out);
  return res.ec == std::errc() && res.ptr == token.data() + token.size() && std::isfinite(out);
}

inline bool parse_index(std::string_view token, std::int64_t& out) {
  if (token.empty()) return false;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), out);
  return res.ec == std::errc() && res.ptr == token.data() + token.size();
}

}  // namespace detail

/// Reads `<label> <idx>:<val> ...` lines with strictly increasing 1-based
/// indices. Blank lines and `#` comments are skipped; absent entries are 0.
inline ParsedLibsvm parse_libsvm(std::istream& in, const LibsvmOptions& options = {}) {
  struct Row {
    double label;
    std::vector<std::pair<std::int64_t, double>> entries;
  };
  std::vector<Row> rows;
  std::optional<Index> header_dim;
  std::int64_t max_index = 0;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view body = detail::trim(line.substr(1));
      if (body.rfind("dim=", 0) == 0) {
        std::int64_t d = 0;
        if (!detail::parse_index(detail::trim(body.substr(4)), d) || d < 0) {
          throw ParseError("malformed dim header", line_no);
        }
        header_dim = static_cast<Index>(d);
      }
      continue;
    }

    Row row;
    std::size_t pos = 0;
    bool first = true;
    std::int64_t prev = 0;
    while (pos < line.size()) {
      const auto end = line.find_first_of(" \t", pos);
      const std::string_view token =
          line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
      pos = end == std::string_view::npos ? line.size() : line.find_first_not_of(" \t", end);
      if (pos == std::string_view::npos) pos = line.size();
      if (token.empty()) continue;

      if (first) {
        if (!detail::parse_double(token, row.label)) {
          throw ParseError("non-numeric label '" + std::string(token) + "'", line_no);
        }
        first = false;
        continue;
      }
      const auto colon = token.find(':');
      if (colon == std::string_view::npos) {
        throw ParseError("expected idx:value, got '" + std::string(token) + "'", line_no);
      }
      std::int64_t idx = 0;
      double value = 0.0;
      if (!detail::parse_index(token.substr(0, colon), idx)) {
        throw ParseError("non-numeric feature index '" + std::string(token) + "'", line_no);
      }
      if (!detail::parse_double(token.substr(colon + 1), value)) {
        throw ParseError("non-numeric feature value '" + std::string(token) + "'", line_no);
      }
      if (idx < 1) throw ParseError("feature index must be >= 1", line_no);
      if (idx == prev) {
        throw ParseError("duplicate feature index " + std::to_string(idx), line_no);
      }
      if (idx < prev) {
        throw ParseError("non-increasing feature index " + std::to_string(idx), line_no);
      }
      prev = idx;
      max_index = std::max(max_index, idx);
      row.entries.emplace_back(idx, value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("empty LIBSVM input", line_no);

  Index dim = static_cast<Index>(max_index);
  if (options.dimension) {
    dim = *options.dimension;
  } else if (header_dim) {
    dim = *header_dim;
  }
  if (dim < max_index) {
    throw ParseError("feature index " + std::to_string(max_index) + " exceeds declared dimension " +
                         std::to_string(dim),
                     line_no);
  }

  ParsedLibsvm parsed;
  std::vector<double> distinct;
  for (const auto& r : rows) distinct.push_back(r.label);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  parsed.raw_labels = distinct;

  LabeledDataset& data = parsed.data;
  data.class_count = static_cast<int>(distinct.size());
  data.features = Matrix::Zero(static_cast<Index>(rows.size()), dim);
  data.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = std::lower_bound(distinct.begin(), distinct.end(), rows[i].label);
    data.labels.push_back(static_cast<int>(it - distinct.begin()));
    for (const auto& [idx, value] : rows[i].entries) {
      data.features(static_cast<Index>(i), static_cast<Index>(idx - 1)) = value;
    }
  }
  return parsed;
}

inline ParsedLibsvm parse_libsvm_file(const std::string& path, const LibsvmOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open LIBSVM file '" + path + "'");
  return parse_libsvm(in, options);
}

/// Writes labels as 1-based class indices and nonzero features at 17
/// significant digits, preceded by a `# dim=<d>` header.
inline void write_libsvm(std::ostream& out, const LabeledDataset& data) {
  std::ostringstream buf;
  buf << std::setprecision(17);
  buf << "# dim=" << data.dim() << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    buf << data.labels[static_cast<std::size_t>(i)] + 1;
    for (Index j = 0; j < data.dim(); ++j) {
      const double v = data.features(i, j);
      if (v != 0.0) buf << ' ' << j + 1 << ':' << v;
    }
    buf << '\n';
  }
  out << buf.str();
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-column affine map x -> (x - mean) / scale.
struct FeatureScaler {
  Vector mean;
  Vector scale;

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw ShapeError("FeatureScaler::apply: dimension mismatch");
    Matrix out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      for (Index i = 0; i < x.rows(); ++i) out(i, j) = (x(i, j) - mean(j)) / scale(j);
    }
    return out;
  }
};

struct StandardizedDataset {
  LabeledDataset data;
  FeatureScaler scaler;
};

/// Centers each column and divides by its population standard deviation
/// (divisor N). Zero-variance columns keep scale 1.
inline StandardizedDataset standardize(const LabeledDataset& data) {
  if (data.size() < 2) throw DomainError("standardize: need at least 2 rows");
  const Index n = data.size();
  const Index d = data.dim();
  FeatureScaler scaler{Vector::Zero(d), Vector::Ones(d)};
  for (Index j = 0; j < d; ++j) {
    const double mean = data.features.col(j).sum() / static_cast<double>(n);
    double ss = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double c = data.features(i, j) - mean;
      ss += c * c;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    scaler.mean(j) = mean;
    scaler.scale(j) = sd > 0.0 ? sd : 1.0;
  }
  StandardizedDataset out{data, scaler};
  out.data.features = scaler.apply(data.features);
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

enum class SplitRole { BehaviorTrain, EvalTrain, Ope, Truth, Cv };

inline const char* to_string(SplitRole role) {
  switch (role) {
    case SplitRole::BehaviorTrain: return "behavior_train";
    case SplitRole::EvalTrain: return "eval_train";
    case SplitRole::Ope: return "ope";
    case SplitRole::Truth: return "truth";
    case SplitRole::Cv: return "cv";
  }
  return "?";
}

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::pair<SplitRole, Index>> sizes;

  Index total() const {
    Index s = 0;
    for (const auto& [role, n] : sizes) s += n;
    return s;
  }
};

/// Layout used by the OPE2D and ISOPE experiments.
inline SplitPlan standard_split_plan(std::uint64_t seed) {
  return {seed,
          {{SplitRole::BehaviorTrain, 1000},
           {SplitRole::EvalTrain, 1000},
           {SplitRole::Ope, 1000},
           {SplitRole::Truth, 2000}}};
}

/// Layout used by the cross-validation experiment.
inline SplitPlan cv_split_plan(std::uint64_t seed) {
  return {seed, {{SplitRole::BehaviorTrain, 1000}, {SplitRole::Cv, 2000}, {SplitRole::Truth, 2000}}};
}

/// Disjoint partitions drawn from one seeded uniform shuffle, in plan order.
inline std::vector<LabeledDataset> split(const LabeledDataset& data, const SplitPlan& plan) {
  for (const auto& [role, n] : plan.sizes) {
    if (n < 1) throw DomainError(std::string("split: partition '") + to_string(role) + "' is empty");
  }
  if (plan.total() > data.size()) {
    throw DomainError("split: plan needs " + std::to_string(plan.total()) + " rows but data has " +
                      std::to_string(data.size()));
  }
  Rng rng(plan.seed);
  const auto perm = rng.permutation(data.size());
  std::vector<LabeledDataset> parts;
  std::size_t offset = 0;
  for (const auto& [role, n] : plan.sizes) {
    std::vector<Index> rows(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                            perm.begin() + static_cast<std::ptrdiff_t>(offset + static_cast<std::size_t>(n)));
    parts.push_back(subset(data, rows));
    offset += static_cast<std::size_t>(n);
  }
  return parts;
}

}  // namespace opelab
