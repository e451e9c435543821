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


#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "opelab/game.hpp"
#include "opelab/inference.hpp"
#include "opelab/ingest.hpp"
#include "opelab/io.hpp"
#include "opelab/multilogger.hpp"
#include "opelab/selection.hpp"
#include "opelab/synthetic.hpp"

namespace {

using namespace opelab;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  bool json = false;
  std::string config;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError(std::string("invalid ") + what + " list '" + text + "'");
    out.push_back(v);
  }
  require(!out.empty(), std::string(what) + " list must not be empty");
  return out;
}

// Options that do not affect results are left out of the config record.
bool recorded(const CLI::Option* opt) {
  const std::string name = opt->get_single_name();
  return name != "help" && name != "out" && name != "json" && name != "config";
}

std::vector<std::pair<std::string, std::string>> resolved_config(const CLI::App* sub) {
  std::vector<std::pair<std::string, std::string>> cfg{{"command", sub->get_name()}};
  for (const CLI::Option* opt : sub->get_options()) {
    if (!recorded(opt)) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      value = opt->get_expected_max() == 0 ? "true" : (res.empty() ? "" : res.back());
    } else {
      value = opt->get_expected_max() == 0 ? "false" : opt->get_default_str();
    }
    cfg.emplace_back(opt->get_single_name(), value);
  }
  return cfg;
}

void emit(const Common& common, RecordTable& table, const CLI::App* sub) {
  table.config = resolved_config(sub);
  std::ostringstream buf;
  if (common.json) {
    write_json(buf, table);
  } else {
    write_csv(buf, table);
  }
  if (common.out.empty()) {
    std::cout << buf.str();
  } else {
    std::ofstream f(common.out, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + common.out);
    f << buf.str();
  }
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Master random seed");
  sub->add_option("--out", common.out, "Output file (default: standard output)");
  sub->add_flag("--json", common.json, "Emit JSON records instead of CSV");
  sub->add_option("--config", common.config, "key = value file; flags given on the command line win");
}

struct Summary {
  double mean = 0.0, sd = 0.0, se = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.se = s.sd / std::sqrt(n);
  return s;
}

// ---------------------------------------------------------------------------

struct BiasArgs {
  std::string sizes = "100,1000";
  Index t2 = 10000;
  std::size_t reps = 1000;
  bool uniform_eval = false;
  double l2 = 0.0;
};

void run_bias(const Common& common, const BiasArgs& a, const CLI::App* sub) {
  const auto sizes = parse_list<Index>(a.sizes, "sizes");
  for (Index s : sizes) require(s > 0, "sizes must be positive");
  require(a.t2 > 0, "t2 must be positive");
  require(a.reps >= 1, "reps must be at least 1");

  const SyntheticSpec spec = make_synthetic_spec(common.seed);
  BiasOptions opts;
  opts.uniform_eval = a.uniform_eval;
  opts.l2 = a.l2;
  RecordTable table;
  table.columns = {"t1", "rep", "truth", "error1", "error2"};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const Index t = sizes[i];
    const auto recs = bias_experiment(spec, t, a.t2, t, a.reps, derive_seed(common.seed, 0xB1A5 + i), opts);
    std::vector<double> e1, e2;
    for (std::size_t r = 0; r < recs.size(); ++r) {
      table.add({static_cast<std::int64_t>(t), static_cast<std::int64_t>(r), recs[r].truth, recs[r].error1,
                 recs[r].error2});
      e1.push_back(recs[r].error1);
      e2.push_back(recs[r].error2);
    }
    const Summary s1 = summarize(e1), s2 = summarize(e2);
    std::cerr << "t1=t3=" << t << " t2=" << a.t2 << " reps=" << a.reps << "  error1 mean " << s1.mean << " sd "
              << s1.sd << " se " << s1.se << "  error2 mean " << s2.mean << " sd " << s2.sd << " se " << s2.se
              << '\n';
  }
  emit(common, table, sub);
}

// ---------------------------------------------------------------------------

struct BepsArgs {
  std::string mode = "ope2d";
  std::string data = "synth";
  std::string alphas = "0.7,0.4,0.0";
  std::size_t reps = 100;
  bool oracle_table = false;
  Index samples = 5000;
  Index dim = 20;
  int classes = 5;
  Index behavior_train = 1000;
  Index eval_train = 1000;
  Index ope = 1000;
  Index truth = 2000;
  Index cv = 2000;
};

void run_beps(const Common& common, const BepsArgs& a, const CLI::App* sub) {
  BepsConfig cfg;
  if (a.mode == "ope2d") {
    cfg.mode = BepsMode::Ope2d;
  } else if (a.mode == "isope") {
    cfg.mode = BepsMode::Isope;
  } else if (a.mode == "opcv") {
    cfg.mode = BepsMode::Opcv;
  } else {
    throw ConfigError("mode must be one of ope2d, isope, opcv");
  }
  cfg.alphas = parse_list<double>(a.alphas, "alphas");
  for (double al : cfg.alphas) require(al >= 0.0 && al <= 1.0, "alphas must lie in [0, 1]");
  require(a.reps >= 1, "reps must be at least 1");
  for (Index s : {a.behavior_train, a.eval_train, a.ope, a.truth, a.cv}) require(s > 0, "split sizes must be positive");
  cfg.reps = a.reps;
  cfg.seed = common.seed;
  cfg.oracle_table = a.oracle_table;
  cfg.behavior_train = a.behavior_train;
  cfg.eval_train = a.eval_train;
  cfg.ope = a.ope;
  cfg.truth = a.truth;
  cfg.cv = a.cv;

  LabeledDataset corpus;
  if (a.data == "synth") {
    require(a.samples > 0 && a.dim > 0, "samples and dim must be positive");
    require(a.classes >= 2, "classes must be at least 2");
    corpus = make_classification_corpus(a.samples, a.dim, a.classes, derive_seed(common.seed, 0xDA7A));
  } else {
    std::ifstream probe(a.data);
    require(static_cast<bool>(probe), "cannot open data file " + a.data);
    corpus = standardize(parse_libsvm_file(a.data).data).data;
  }

  const BepsTable result = opelab::run_beps(corpus, cfg);
  RecordTable table;
  table.columns.push_back("alpha");
  for (const auto& c : result.columns) {
    table.columns.push_back(c + " mean");
    table.columns.push_back(c + " sd");
  }
  table.columns.push_back("Uniform mean");
  table.columns.push_back("Uniform sd");
  for (const auto& row : result.rows) {
    std::vector<Cell> cells{row.alpha};
    const Vector m = row.mean(), s = row.sd();
    for (Index c = 0; c < m.size(); ++c) {
      cells.emplace_back(m(c));
      cells.emplace_back(s(c));
    }
    std::vector<double> u(row.uniform_regret.data(), row.uniform_regret.data() + row.uniform_regret.size());
    const Summary us = summarize(u);
    cells.emplace_back(us.mean);
    cells.emplace_back(us.sd);
    table.add(std::move(cells));
  }
  emit(common, table, sub);
}

// ---------------------------------------------------------------------------

struct GmmArgs {
  Index ta = 2000;
  Index tb = 2000;
  std::size_t reps = 300;
  double sharpness = 2.0;
  double epsilon = 0.1;
  bool identical = false;
  double ridge_lambda = 1.0;
  Index truth_sample = 200000;
};

void run_gmm(const Common& common, const GmmArgs& a, const CLI::App* sub) {
  require(a.ta >= 4 && a.tb >= 4, "stratum sizes must be at least 4");
  require(a.reps >= 1, "reps must be at least 1");
  require(a.epsilon >= 0.0 && a.epsilon <= 1.0, "epsilon must lie in [0, 1]");
  require(a.ridge_lambda >= 0.0, "ridge-lambda must be nonnegative");
  require(a.truth_sample > 0, "truth-sample must be positive");
  GmmExperimentConfig cfg;
  cfg.size_a = a.ta;
  cfg.size_b = a.tb;
  cfg.reps = a.reps;
  cfg.seed = common.seed;
  cfg.sharpness = a.sharpness;
  cfg.epsilon = a.epsilon;
  cfg.identical_loggers = a.identical;
  cfg.ridge_lambda = a.ridge_lambda;
  cfg.truth_sample = a.truth_sample;
  RecordTable table;
  table.columns = {"estimator", "rmse", "sd", "mean_error"};
  for (const auto& row : gmm_experiment(cfg)) table.add({row.name, row.rmse, row.sd, row.mean_error});
  emit(common, table, sub);
}

// ---------------------------------------------------------------------------

void add_vector(RecordTable& table, const char* name, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) table.add({std::string(name), static_cast<std::int64_t>(i + 1), v(i)});
}

struct GameArgs {
  std::string payoff;
};

void run_game(const Common& common, const GameArgs& a, const CLI::App* sub) {
  require(!a.payoff.empty(), "payoff file is required");
  const Matrix c = read_csv_matrix_file(a.payoff).values;
  const GameSolution g = solve_zero_sum(c);
  RecordTable table;
  table.columns = {"quantity", "index", "value"};
  add_vector(table, "p", g.p_star);
  add_vector(table, "w", g.w_star);
  table.add({std::string("z"), std::int64_t{0}, g.value});
  emit(common, table, sub);
}

struct DesignArgs {
  std::string nu;
  std::string policies;
  std::string f;
  double floor = 0.01;
  int iterations = 2000;
};

void run_design(const Common& common, const DesignArgs& a, const CLI::App* sub) {
  require(!a.nu.empty() && !a.policies.empty(), "nu and policies files are required");
  require(a.floor > 0.0, "floor must be positive");
  require(a.iterations >= 1, "iterations must be at least 1");
  GroundTruth truth;
  truth.nu_star = read_csv_matrix_file(a.nu).values;
  truth.f_star = a.f.empty() ? Matrix::Zero(truth.nu_star.rows(), truth.nu_star.cols())
                             : read_csv_matrix_file(a.f).values;
  const Matrix rows = read_csv_matrix_file(a.policies).values;
  require(rows.cols() == truth.nu_star.cols(), "policies and nu must have the same number of actions");
  std::vector<PolicyMatrix> policies;
  for (Index l = 0; l < rows.rows(); ++l) policies.push_back(constant_policy(rows.row(l).transpose(), truth.nu_star.rows()));
  DesignOptions opts;
  opts.floor = a.floor;
  opts.iterations = a.iterations;
  const DesignResult d = efficient_design(policies, truth, opts);
  RecordTable table;
  table.columns = {"quantity", "index", "value"};
  add_vector(table, "behavior", d.behavior);
  table.add({std::string("bound"), std::int64_t{0}, d.bound});
  table.add({std::string("uniform_bound"), std::int64_t{0}, d.uniform_bound});
  emit(common, table, sub);
}

struct PowerArgs {
  double sigma2 = 1.0;
  double delta = 0.1;
  double alpha = 0.05;
  double beta = 0.8;
};

void run_power(const Common& common, const PowerArgs& a, const CLI::App* sub) {
  require(a.sigma2 > 0.0, "sigma2 must be positive");
  require(a.delta > 0.0, "delta must be positive");
  require(a.alpha > 0.0 && a.alpha < 1.0, "alpha must lie in (0, 1)");
  require(a.beta > 0.0 && a.beta < 1.0, "beta must lie in (0, 1)");
  RecordTable table;
  table.columns = {"sigma2", "delta", "alpha", "beta", "sample_size"};
  table.add({a.sigma2, a.delta, a.alpha, a.beta, static_cast<std::int64_t>(sample_size(a.sigma2, a.delta, a.alpha, a.beta))});
  emit(common, table, sub);
}

// ---------------------------------------------------------------------------

// Reads `key = value` lines ('#' starts a comment) into flag arguments.
std::vector<std::string> config_arguments(const std::string& path, const CLI::App* sub) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::vector<std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = std::string(detail::trim(line));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key(detail::trim(std::string_view(text).substr(0, eq)));
    std::string value(detail::trim(std::string_view(text).substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (key == "config") throw ConfigError("config files cannot include other config files");
    if (opt->get_expected_max() == 0) {
      if (value == "true" || value == "1" || value == "yes") {
        out.push_back("--" + key);
      } else if (!(value == "false" || value == "0" || value == "no")) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": '" + key + "' expects true or false");
      }
    } else {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-policy evaluation experiments and tools", "opelab"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);

  Common common;
  BiasArgs bias;
  BepsArgs beps;
  GmmArgs gmm;
  GameArgs game;
  DesignArgs design;
  PowerArgs power;
  std::map<const CLI::App*, std::function<void(const CLI::App*)>> runners;

  auto* s_bias = app.add_subcommand("bias", "In-sample versus independent-sample value error of a trained policy");
  add_common(s_bias, common);
  s_bias->add_option("--sizes", bias.sizes, "Comma-separated T1 = T3 values");
  s_bias->add_option("--t2", bias.t2, "Size of the simulated on-policy sample");
  s_bias->add_option("--reps", bias.reps, "Replications per size");
  s_bias->add_flag("--uniform-eval", bias.uniform_eval, "Use the uniform policy instead of a trained one");
  s_bias->add_option("--l2", bias.l2, "Logistic l2; 0 means 1 / T1");
  runners[s_bias] = [&](const CLI::App* s) { run_bias(common, bias, s); };

  auto* s_beps = app.add_subcommand("beps", "Best evaluation policy selection regret table");
  add_common(s_beps, common);
  s_beps->add_option("--mode", beps.mode, "ope2d, isope or opcv");
  s_beps->add_option("--data", beps.data, "LIBSVM file or 'synth'");
  s_beps->add_option("--alphas", beps.alphas, "Comma-separated behavior mixture weights");
  s_beps->add_option("--reps", beps.reps, "Replications");
  s_beps->add_flag("--oracle-table", beps.oracle_table, "Feed true values to every criterion");
  s_beps->add_option("--samples", beps.samples, "Synthetic corpus size");
  s_beps->add_option("--dim", beps.dim, "Synthetic feature dimension");
  s_beps->add_option("--classes", beps.classes, "Synthetic class count");
  s_beps->add_option("--behavior-train", beps.behavior_train, "Behavior classifier training rows");
  s_beps->add_option("--eval-train", beps.eval_train, "Candidate training rows (ope2d, isope)");
  s_beps->add_option("--ope", beps.ope, "Logged evaluation rows (ope2d)");
  s_beps->add_option("--truth", beps.truth, "Rows used to measure true values");
  s_beps->add_option("--cv", beps.cv, "Cross-validation rows (opcv)");
  runners[s_beps] = [&](const CLI::App* s) { run_beps(common, beps, s); };

  auto* s_gmm = app.add_subcommand("gmm", "Two-logger comparison of stratified and pooled estimators");
  add_common(s_gmm, common);
  s_gmm->add_option("--ta", gmm.ta, "Stratum A size");
  s_gmm->add_option("--tb", gmm.tb, "Stratum B size");
  s_gmm->add_option("--reps", gmm.reps, "Replications");
  s_gmm->add_option("--sharpness", gmm.sharpness, "Logit scale of logger A");
  s_gmm->add_option("--epsilon", gmm.epsilon, "Uniform share of logger A");
  s_gmm->add_flag("--identical-loggers", gmm.identical, "Log both strata with logger B");
  s_gmm->add_option("--ridge-lambda", gmm.ridge_lambda, "Reward model ridge penalty");
  s_gmm->add_option("--truth-sample", gmm.truth_sample, "Sample size for the true value");
  runners[s_gmm] = [&](const CLI::App* s) { run_gmm(common, gmm, s); };

  auto* s_game = app.add_subcommand("game", "Solve the policy selection game for a payoff CSV");
  add_common(s_game, common);
  s_game->add_option("--payoff", game.payoff, "L x E payoff CSV, header optional");
  runners[s_game] = [&](const CLI::App* s) { run_game(common, game, s); };

  auto* s_design = app.add_subcommand("design", "Minimax-efficient context-free behavior policy");
  add_common(s_design, common);
  s_design->add_option("--nu", design.nu, "T x K conditional variance CSV");
  s_design->add_option("--policies", design.policies, "L x K evaluation policy rows CSV");
  s_design->add_option("--f", design.f, "T x K conditional mean CSV (default zeros)");
  s_design->add_option("--floor", design.floor, "Lower bound on every behavior probability");
  s_design->add_option("--iterations", design.iterations, "Subgradient iterations");
  runners[s_design] = [&](const CLI::App* s) { run_design(common, design, s); };

  auto* s_power = app.add_subcommand("power", "Sample size for a two-sided test of a value difference");
  add_common(s_power, common);
  s_power->add_option("--sigma2", power.sigma2, "Largest asymptotic variance");
  s_power->add_option("--delta", power.delta, "Detectable difference");
  s_power->add_option("--alpha", power.alpha, "Type I error");
  s_power->add_option("--beta", power.beta, "Power");
  runners[s_power] = [&](const CLI::App* s) { run_power(common, power, s); };

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // Splice config-file values in front of the command-line flags.
    if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
      CLI::App* sub = nullptr;
      try {
        sub = app.get_subcommand(args[0]);
      } catch (const CLI::OptionNotFound&) {
      }
      for (std::size_t i = 1; sub && i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) {
          path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
          path = args[i].substr(9);
        }
        if (!path.empty()) {
          auto extra = config_arguments(path, sub);
          args.insert(args.begin() + 1, extra.begin(), extra.end());
          break;
        }
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  std::vector<char*> cargs{argv[0]};
  for (auto& a : args) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    for (auto& [sub, run] : runners) {
      if (sub->parsed()) run(sub);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const opelab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
