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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "opelab/core.hpp"
#include "opelab/ingest.hpp"
#include "opelab/models.hpp"

namespace opelab {

// ---------------------------------------------------------------------------
// Numeric CSV

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct CsvMatrix {
  std::vector<std::string> header;  // empty when the input had none
  Matrix values;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.emplace_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Reads a rectangular numeric CSV. A first row that does not parse as
/// numbers is taken as the header; blank lines and '#' lines are skipped.
inline CsvMatrix read_csv_matrix(std::istream& in) {
  CsvMatrix out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = detail::split_csv_line(line);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& c : cells) {
      double v = 0.0;
      if (!detail::parse_double(c, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (first) {
        out.header = cells;
        first = false;
        continue;
      }
      throw ParseError("non-numeric CSV cell", line_no);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged CSV row", line_no);
    if (!out.header.empty() && row.size() != out.header.size()) {
      throw ParseError("CSV row width differs from the header", line_no);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("CSV has no data rows", line_no);
  out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return out;
}

inline CsvMatrix read_csv_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path);
  return read_csv_matrix(in);
}

inline void write_csv_matrix(std::ostream& out, const Matrix& m, const std::vector<std::string>& header) {
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != m.cols()) throw ShapeError("CSV header width differs from the matrix");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

/// Score matrix with columns g1..gK.
inline void write_scores_csv(std::ostream& out, const ScoreMatrix& s) {
  std::vector<std::string> header;
  for (Index a = 0; a < s.num_actions(); ++a) header.push_back("g" + std::to_string(a + 1));
  write_csv_matrix(out, s.scores, header);
}

/// Log layout: x1..xd, action (1-based), reward, p1..pK.
inline void write_log_csv(std::ostream& out, const LoggedBanditData& log) {
  const Index d = log.dim();
  const Index K = log.num_actions;
  for (Index j = 0; j < d; ++j) out << "x" << j + 1 << ",";
  out << "action,reward";
  for (Index a = 0; a < K; ++a) out << ",p" << a + 1;
  out << '\n';
  for (Index t = 0; t < log.size(); ++t) {
    for (Index j = 0; j < d; ++j) out << format_double(log.covariates(t, j)) << ",";
    out << log.actions[static_cast<std::size_t>(t)] + 1 << "," << format_double(log.rewards(t));
    for (Index a = 0; a < K; ++a) out << "," << format_double(log.behavior_props(t, a));
    out << '\n';
  }
}

inline LoggedBanditData read_log_csv(std::istream& in) {
  const CsvMatrix csv = read_csv_matrix(in);
  if (csv.header.empty()) throw ParseError("log CSV needs a header", 1);
  Index action_col = -1;
  for (std::size_t j = 0; j < csv.header.size(); ++j) {
    if (csv.header[j] == "action") action_col = static_cast<Index>(j);
  }
  if (action_col < 0 || action_col + 2 > csv.values.cols() ||
      csv.header[static_cast<std::size_t>(action_col + 1)] != "reward") {
    throw ParseError("log CSV needs adjacent 'action' and 'reward' columns", 1);
  }
  LoggedBanditData log;
  const Index d = action_col;
  log.num_actions = csv.values.cols() - d - 2;
  if (log.num_actions < 1) throw ParseError("log CSV has no propensity columns", 1);
  log.covariates = csv.values.leftCols(d);
  log.rewards = csv.values.col(d + 1);
  log.behavior_props = csv.values.rightCols(log.num_actions);
  for (Index t = 0; t < csv.values.rows(); ++t) {
    const double a = csv.values(t, d);
    if (a != std::floor(a) || a < 1 || a > static_cast<double>(log.num_actions)) {
      throw ParseError("action out of range", static_cast<std::size_t>(t + 2));
    }
    log.actions.push_back(static_cast<int>(a) - 1);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Record tables shared by CSV and JSON output

using Cell = std::variant<double, std::int64_t, std::string>;

struct RecordTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  // Resolved configuration, emitted as a leading comment line.
  std::vector<std::pair<std::string, std::string>> config;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw ShapeError("record width differs from the column count");
    rows.push_back(std::move(row));
  }
};

inline std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

inline void write_csv(std::ostream& out, const RecordTable& table) {
  out << "# config";
  for (const auto& [k, v] : table.config) out << ' ' << k << '=' << v;
  out << '\n';
  for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << table.columns[j];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << cell_text(row[j]);
    out << '\n';
  }
}

inline void write_json(std::ostream& out, const RecordTable& table) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : table.config) cfg[k] = v;
  doc["config"] = cfg;
  nlohmann::ordered_json records = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json rec = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::visit([&](const auto& v) { rec[table.columns[j]] = v; }, row[j]);
    }
    records.push_back(std::move(rec));
  }
  doc["records"] = std::move(records);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Model records

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<Index>(), j.at("cols").get<Index>());
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != m.rows()) throw ParseError("matrix row count mismatch", 0);
  for (Index i = 0; i < m.rows(); ++i) {
    const auto& r = data.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(r.size()) != m.cols()) throw ParseError("matrix column count mismatch", 0);
    for (Index k = 0; k < m.cols(); ++k) m(i, k) = r.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

inline void check_header(const nlohmann::json& j, const char* name) {
  if (j.at("format_version").get<int>() != kModelFormatVersion) throw ParseError("unsupported model version", 0);
  if (j.at("model").get<std::string>() != name) {
    throw ParseError("expected a " + std::string(name) + " record, got " + j.at("model").get<std::string>(), 0);
  }
}

inline FeatureMapKind feature_map_kind(const std::string& s) {
  if (s == "linear") return FeatureMapKind::Linear;
  if (s == "poly2") return FeatureMapKind::Poly2;
  if (s == "rbf") return FeatureMapKind::RbfRandom;
  throw ParseError("unknown feature map '" + s + "'", 0);
}

}  // namespace detail

inline nlohmann::json to_json(const RidgeModel& m) {
  return {{"format_version", kModelFormatVersion},
          {"model", "ridge"},
          {"lambda", m.lambda},
          {"weights", detail::matrix_json(m.weights)}};
}

inline RidgeModel ridge_from_json(const nlohmann::json& j) {
  detail::check_header(j, "ridge");
  return {detail::matrix_from_json(j.at("weights")), j.at("lambda").get<double>()};
}

inline nlohmann::json to_json(const KernelRidgeModel& m) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : m.components) {
    nlohmann::json cj = {{"constant", c.constant}, {"constant_value", c.constant_value}};
    if (!c.constant) {
      cj["support"] = detail::matrix_json(c.support);
      cj["dual"] = std::vector<double>(c.dual.data(), c.dual.data() + c.dual.size());
    }
    comps.push_back(std::move(cj));
  }
  return {{"format_version", kModelFormatVersion},
          {"model", "kernel_ridge"},
          {"gamma", m.gamma},
          {"lambda", m.lambda},
          {"components", std::move(comps)}};
}

inline KernelRidgeModel kernel_ridge_from_json(const nlohmann::json& j) {
  detail::check_header(j, "kernel_ridge");
  KernelRidgeModel m;
  m.gamma = j.at("gamma").get<double>();
  m.lambda = j.at("lambda").get<double>();
  for (const auto& cj : j.at("components")) {
    KernelRidgeModel::Component c;
    c.constant = cj.at("constant").get<bool>();
    c.constant_value = cj.at("constant_value").get<double>();
    if (!c.constant) {
      c.support = detail::matrix_from_json(cj.at("support"));
      const auto dual = cj.at("dual").get<std::vector<double>>();
      if (static_cast<Index>(dual.size()) != c.support.rows()) throw ParseError("dual/support count mismatch", 0);
      c.dual = Eigen::Map<const Vector>(dual.data(), static_cast<Index>(dual.size()));
    }
    m.components.push_back(std::move(c));
  }
  return m;
}

/// Random features are rebuilt from the stored map seed.
inline nlohmann::json to_json(const LogisticPolicyModel& m) {
  return {{"format_version", kModelFormatVersion},
          {"model", "logistic_policy"},
          {"feature_map",
           {{"kind", to_string(m.map.spec.kind)},
            {"count", m.map.spec.count},
            {"gamma", m.map.spec.gamma},
            {"seed", m.map.spec.seed},
            {"input_dim", m.map.input_dim}}},
          {"class_count", m.class_count},
          {"present", m.present},
          {"l2", m.l2},
          {"weights", detail::matrix_json(m.weights)}};
}

inline LogisticPolicyModel logistic_policy_from_json(const nlohmann::json& j) {
  detail::check_header(j, "logistic_policy");
  const auto& fm = j.at("feature_map");
  FeatureMapSpec spec;
  spec.kind = detail::feature_map_kind(fm.at("kind").get<std::string>());
  spec.count = fm.at("count").get<Index>();
  spec.gamma = fm.at("gamma").get<double>();
  spec.seed = fm.at("seed").get<std::uint64_t>();
  LogisticPolicyModel m;
  m.map = make_feature_map(spec, fm.at("input_dim").get<Index>());
  m.class_count = j.at("class_count").get<int>();
  m.present = j.at("present").get<std::vector<int>>();
  m.l2 = j.at("l2").get<double>();
  m.weights = detail::matrix_from_json(j.at("weights"));
  if (m.weights.rows() != m.map.output_dim() || m.weights.cols() != static_cast<Index>(m.present.size())) {
    throw ParseError("logistic weights do not match the feature map", 0);
  }
  return m;
}

}  // namespace opelab
