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

#pragma once

#include "ddn/compose.hpp"
#include "ddn/implicit_diff.hpp"
#include "ddn/pooling.hpp"
#include "ddn/projection.hpp"
#include "ddn/report.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddn {

/// Bad selector, unknown task or malformed option. Maps to exit status 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Random stream owned by one trial, derived from (seed, stream, trial) so
/// results do not depend on the order trials run in.
std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream = 0);

/// ||J - ref||_F / ||ref||_F; 0 when both are below 1e-300, the absolute
/// difference when only ref vanishes.
double relative_error(const Matrix& J, const Matrix& ref);

// ---------------------------------------------------------------------------
// Gradient checks

struct TrialOutcome {
  double rel_err = 0.0;
  bool one_sided = false;
  bool fallback = false;
  std::set<GradientPath> paths;
};

struct GradCheckFamily {
  std::string id;
  std::string description;
  double tolerance = 1e-5;
  std::function<TrialOutcome(std::mt19937_64&)> trial;
};

struct GradCheckReport {
  std::string node_id;
  int trials = 0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  int one_sided_count = 0;
  int fallback_count = 0;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  std::set<GradientPath> paths;

  bool passed() const { return max_rel_err <= tolerance; }
};

/// Every built-in family, in a fixed order.
const std::vector<GradCheckFamily>& gradcheck_registry();
const GradCheckFamily* find_gradcheck_family(const std::string& id);
/// Ids of the built-in node families (pooling, projection, relu, chain).
std::vector<std::string> builtin_node_ids();

GradCheckReport run_gradcheck(const GradCheckFamily& family, int trials, std::uint64_t seed,
                              std::optional<double> tolerance = std::nullopt);

// ---------------------------------------------------------------------------
// Robustness study

struct StudyConfig {
  int points = 100;
  double inlier_sigma = 0.1;
  double center_low = -1.0;
  double center_high = 1.0;
  double outlier_low = -1.0;
  double outlier_high = 1.0;
  std::vector<double> fractions{0.0, 0.1, 0.2, 0.5, 0.9};
  int trials = 200;
  double alpha = 0.5;
  std::uint64_t seed = 0;
};

void validate(const StudyConfig& config);

struct RobustnessStudyRow {
  double outlier_fraction = 0.0;
  Penalty penalty = Penalty::Quadratic;
  double estimator_error = 0.0;  // mean |pooled - inlier center|
  int trials = 0;
  int failures = 0;              // trials where the pooling solve failed
};

/// Every penalty pools the same samples within a trial.
std::vector<RobustnessStudyRow> robustness_study(const StudyConfig& config);

// ---------------------------------------------------------------------------
// Training demos

/// "robust-mean-fit": x = [theta; d], y = pseudo-Huber pool of theta * d_i,
/// J = 1/2 (y - t)^2 with a target set by the inlier center.
/// "projection-head-fit": x = [theta; d], y = L2-sphere projection of
/// theta + d, J = 1/2 ||y - t||^2.
BilevelTask make_train_task(const std::string& name, int steps, double step_size,
                            std::uint64_t seed);
std::vector<std::string> train_task_names();

// ---------------------------------------------------------------------------
// Commands behind the CLI and the C API. Usage problems throw UsageError,
// domain failures throw NodeError.

Report cmd_gradcheck(const std::string& node, int trials, std::uint64_t seed,
                     std::optional<double> tolerance = std::nullopt);
Report cmd_pool(const Vector& values, const PenaltySpec& spec, std::uint64_t seed);
Report cmd_project(const Vector& values, const ProjectionSpec& spec, std::uint64_t seed);
Report cmd_study(const StudyConfig& config);
Report cmd_train(const std::string& task, int steps, double step_size, std::uint64_t seed);

}  // namespace ddn
