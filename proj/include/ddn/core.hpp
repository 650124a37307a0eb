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

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Absolute tolerances for unit-scale problems.
inline constexpr double kStationarityTol = 1e-8;
inline constexpr double kFeasibilityTol = 1e-8;

enum class ErrorKind {
  InfeasibleProblem,
  SolverDiverged,
  SingularHessian,
  RankDeficientConstraints,
  UndefinedGradient,
  DimensionMismatch,
};

const char* to_string(ErrorKind kind) noexcept;

/// Failure of a forward solve or a backward (gradient) computation. The
/// message always names the offending dimensions or condition estimate.
class NodeError : public std::runtime_error {
 public:
  NodeError(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

using ScalarFn = std::function<double(const Vector& x, const Vector& u)>;
using VectorFn = std::function<Vector(const Vector& x, const Vector& u)>;
using MatrixFn = std::function<Matrix(const Vector& x, const Vector& u)>;
using MatrixListFn = std::function<std::vector<Matrix>(const Vector& x, const Vector& u)>;

/// Optional closed-form derivatives. Any callback left empty is replaced by
/// finite differences. Shapes follow the numerator layout: a function
/// R^n -> R^m has an m x n derivative, so `f_xy` is m x n and `h_y` is p x m.
struct AnalyticDerivatives {
  VectorFn f_y;      // m
  MatrixFn f_yy;     // m x m
  MatrixFn f_xy;     // m x n
  MatrixFn h_y;      // p x m
  MatrixFn h_x;      // p x n
  MatrixListFn h_yy; // p blocks of m x m
  MatrixListFn h_xy; // p blocks of m x n
  MatrixFn g_y;      // q x m
  MatrixFn g_x;      // q x n
  MatrixListFn g_yy; // q blocks of m x m
  MatrixListFn g_xy; // q blocks of m x n
};

/// One declarative node:
///   y(x) in argmin_u f(x, u)  s.t.  h(x, u) = 0,  g(x, u) <= 0.
struct DeclarativeProblem {
  ScalarFn objective;
  VectorFn eq_constraints;    // empty when p = 0
  VectorFn ineq_constraints;  // empty when q = 0
  Index input_dim = 0;
  Index output_dim = 0;
  Index num_eq = 0;
  Index num_ineq = 0;
  AnalyticDerivatives derivatives;

  bool has_eq() const { return num_eq > 0; }
  bool has_ineq() const { return num_ineq > 0; }
};

struct SolverInfo {
  int iterations = 0;
  bool converged = false;
  int restarts = 0;
};

struct Solution {
  Vector y;
  Vector multipliers;             // p + q entries, inactive inequalities are 0
  std::vector<bool> active_set;   // q entries
  double objective_value = 0.0;
  SolverInfo solver_info;
};

struct Jacobian {
  Matrix matrix;
  bool one_sided = false;
  bool rank_deficient_fallback = false;
};

/// Residuals used to check a solution against the first-order conditions.
struct KktResiduals {
  double stationarity = 0.0;
  double eq_violation = 0.0;
  double ineq_violation = 0.0;     // max(0, max_i g_i)
  double max_active_multiplier = 0.0;  // should be <= 0
};

/// Probes every callback at (x, u) and throws DimensionMismatch on any shape
/// violation. Zero vectors are used when no probe point is given.
void validate_problem(const DeclarativeProblem& problem,
                      const std::optional<Vector>& x = std::nullopt,
                      const std::optional<Vector>& u = std::nullopt);

std::string shape_string(Index rows, Index cols);

/// Compact "%.6g" rendering for error messages.
std::string format_real(double v);

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ddn
