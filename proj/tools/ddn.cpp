// Copyright 2026 The ddn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Talks to the library only through ddn.h.

#include "ddn/ddn.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct UsageProblem {
  std::string message;
};

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) throw UsageProblem{what + ": empty entry in '" + text + "'"};
    const auto last = item.find_last_not_of(" \t");
    const std::string token = item.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) throw UsageProblem{what + ": '" + token + "' is not a number"};
    out.push_back(v);
  }
  return out;
}

std::vector<double> read_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageProblem{"cannot open input file '" + path + "'"};
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(first, last - first + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size()) {
      throw UsageProblem{path + ":" + std::to_string(lineno) + ": '" + token +
                         "' is not a number"};
    }
    out.push_back(v);
  }
  return out;
}

struct VectorInput {
  std::string values;
  std::string input;

  std::vector<double> get() const {
    if (!values.empty() && !input.empty()) {
      throw UsageProblem{"give either --values or --input, not both"};
    }
    if (!input.empty()) return read_values_file(input);
    if (values.empty()) throw UsageProblem{"missing input vector (--values or --input)"};
    return parse_list(values, "--values");
  }
};

struct Common {
  std::uint64_t seed = 0;
  std::string format = "text";
  std::string out;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--seed", common.seed, "random seed");
  cmd->add_option("--format", common.format, "json, csv or text")
      ->check(CLI::IsMember({"json", "csv", "text"}));
  cmd->add_option("--out", common.out, "output file (default: standard output)");
}

int report_error(ddn_status status) {
  std::cerr << "ddn: " << ddn_status_name(status) << ": " << ddn_last_error() << "\n";
  return status == DDN_INVALID_ARGUMENT ? kExitUsage : kExitDomain;
}

// Renders and writes the report; the exit code reflects the report's checks.
int emit(ddn_report* report, const Common& common) {
  char* text = nullptr;
  const ddn_status st = ddn_report_render(report, common.format.c_str(), &text);
  if (st != DDN_OK) {
    ddn_report_free(report);
    return report_error(st);
  }
  int code = ddn_report_passed(report) ? kExitOk : kExitDomain;
  if (common.out.empty()) {
    std::fputs(text, stdout);
    std::fflush(stdout);
  } else {
    std::ofstream f(common.out, std::ios::binary);
    f << text;
    if (!f) {
      std::cerr << "ddn: cannot write '" << common.out << "'\n";
      code = kExitDomain;
    }
  }
  ddn_string_free(text);
  ddn_report_free(report);
  return code;
}

// Runs one library call that produces a report.
template <typename Call>
int run(Call call, const Common& common) {
  ddn_report* report = nullptr;
  const ddn_status st = call(&report);
  if (st != DDN_OK) return report_error(st);
  return emit(report, common);
}

void apply_study_json(const std::string& path, ddn_study_config& c, std::vector<double>& fractions) {
  std::ifstream in(path);
  if (!in) throw UsageProblem{"cannot open config file '" + path + "'"};
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageProblem{path + ": " + e.what()};
  }
  if (!j.is_object()) throw UsageProblem{path + ": expected a JSON object"};
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      if (key == "points") {
        c.points = it->get<int>();
      } else if (key == "trials") {
        c.trials = it->get<int>();
      } else if (key == "inlier_sigma") {
        c.inlier_sigma = it->get<double>();
      } else if (key == "alpha") {
        c.alpha = it->get<double>();
      } else if (key == "seed") {
        c.seed = it->get<std::uint64_t>();
      } else if (key == "center_range") {
        const auto r = it->get<std::vector<double>>();
        if (r.size() != 2) throw UsageProblem{path + ": center_range needs two numbers"};
        c.center_low = r[0];
        c.center_high = r[1];
      } else if (key == "outlier_range") {
        const auto r = it->get<std::vector<double>>();
        if (r.size() != 2) throw UsageProblem{path + ": outlier_range needs two numbers"};
        c.outlier_low = r[0];
        c.outlier_high = r[1];
      } else if (key == "fractions") {
        fractions = it->get<std::vector<double>>();
      } else {
        throw UsageProblem{path + ": unknown key '" + key + "'"};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageProblem{path + ": " + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep declarative nodes: gradient checks, pooling and projection demos, "
               "robustness study, bilevel training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ddn_version()));

  // gradcheck
  Common gc_common;
  std::string gc_node;
  bool gc_all = false;
  int gc_trials = 100;
  double gc_tol = 0.0;
  auto* gc = app.add_subcommand("gradcheck", "compare analytic Jacobians with finite differences");
  add_common(gc, gc_common);
  auto* node_opt = gc->add_option("--node", gc_node, "node family id");
  gc->add_flag("--all", gc_all, "run every registered family")->excludes(node_opt);
  gc->add_option("--trials", gc_trials, "trials per family")->check(CLI::NonNegativeNumber);
  gc->add_option("--tol", gc_tol, "override the family tolerance")->check(CLI::PositiveNumber);

  // pool
  Common pool_common;
  VectorInput pool_in;
  std::string pool_penalty = "quadratic";
  double pool_alpha = 1.0;
  auto* pool = app.add_subcommand("pool", "robust pooling of a vector");
  add_common(pool, pool_common);
  pool->add_option("--values", pool_in.values, "comma separated values");
  pool->add_option("--input", pool_in.input, "file with one number per line");
  pool->add_option("--penalty", pool_penalty,
                   "quadratic, pseudo-huber, huber, welsch or trunc-quad");
  pool->add_option("--alpha", pool_alpha, "penalty scale");

  // project
  Common proj_common;
  VectorInput proj_in;
  std::string proj_norm = "l2";
  std::string proj_surface = "sphere";
  double proj_radius = 1.0;
  bool proj_masked = false;
  auto* project = app.add_subcommand("project", "Euclidean projection onto an Lp sphere or ball");
  add_common(project, proj_common);
  project->add_option("--values", proj_in.values, "comma separated values");
  project->add_option("--input", proj_in.input, "file with one number per line");
  project->add_option("--norm", proj_norm, "l1, l2 or linf");
  project->add_option("--surface", proj_surface, "sphere or ball");
  project->add_option("--radius", proj_radius, "radius of the sphere or ball");
  project->add_flag("--masked", proj_masked, "report the masked Jacobian");

  // study
  Common study_common;
  ddn_study_config study_cfg;
  ddn_study_config_default(&study_cfg);
  std::string study_config_path;
  std::string study_fractions;
  std::optional<int> study_points;
  std::optional<int> study_trials;
  std::optional<double> study_alpha;
  std::optional<double> study_sigma;
  auto* study = app.add_subcommand("study", "outlier robustness of the pooling penalties");
  add_common(study, study_common);
  study->add_option("--config", study_config_path, "JSON file with study settings");
  study->add_option("--points", study_points, "samples per trial");
  study->add_option("--trials", study_trials, "trials per outlier fraction");
  study->add_option("--alpha", study_alpha, "penalty scale for the robust penalties");
  study->add_option("--inlier-sigma", study_sigma, "inlier standard deviation");
  study->add_option("--fractions", study_fractions, "comma separated outlier fractions");

  // train
  Common train_common;
  std::string train_task;
  int train_steps = 50;
  double train_step_size = 0.1;
  auto* train = app.add_subcommand("train", "bilevel training demo");
  add_common(train, train_common);
  train->add_option("--task", train_task, "robust-mean-fit or projection-head-fit")->required();
  train->add_option("--steps", train_steps, "gradient steps")->check(CLI::NonNegativeNumber);
  train->add_option("--step-size", train_step_size, "gradient step size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gc) {
      if (!gc_all && gc_node.empty()) throw UsageProblem{"gradcheck needs --node <id> or --all"};
      const std::string node = gc_all ? "all" : gc_node;
      return run([&](ddn_report** r) {
        return ddn_gradcheck(node.c_str(), gc_trials, gc_common.seed, gc_tol, r);
      }, gc_common);
    }
    if (*pool) {
      const std::vector<double> v = pool_in.get();
      return run([&](ddn_report** r) {
        return ddn_pool(v.data(), v.size(), pool_penalty.c_str(), pool_alpha, pool_common.seed, r);
      }, pool_common);
    }
    if (*project) {
      const std::vector<double> v = proj_in.get();
      return run([&](ddn_report** r) {
        return ddn_project(v.data(), v.size(), proj_norm.c_str(), proj_surface.c_str(),
                           proj_radius, proj_masked ? 1 : 0, proj_common.seed, r);
      }, proj_common);
    }
    if (*study) {
      std::vector<double> fractions;
      if (!study_config_path.empty()) apply_study_json(study_config_path, study_cfg, fractions);
      if (study_points) study_cfg.points = *study_points;
      if (study_trials) study_cfg.trials = *study_trials;
      if (study_alpha) study_cfg.alpha = *study_alpha;
      if (study_sigma) study_cfg.inlier_sigma = *study_sigma;
      if (!study_fractions.empty()) fractions = parse_list(study_fractions, "--fractions");
      if (study->count("--seed") > 0 || study_config_path.empty()) {
        study_cfg.seed = study_common.seed;
      }
      if (!fractions.empty()) {
        study_cfg.fractions = fractions.data();
        study_cfg.fraction_count = fractions.size();
      }
      return run([&](ddn_report** r) { return ddn_study(&study_cfg, r); }, study_common);
    }
    if (*train) {
      return run([&](ddn_report** r) {
        return ddn_train(train_task.c_str(), train_steps, train_step_size, train_common.seed, r);
      }, train_common);
    }
  } catch (const UsageProblem& e) {
    std::cerr << "ddn: usage: " << e.message << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
