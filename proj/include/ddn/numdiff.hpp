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

#include "ddn/core.hpp"

#include <functional>
#include <vector>

namespace ddn {

enum class StepRule { CubeRootEps, Fixed };
enum class FdScheme { Central, Forward };

struct FdConfig {
  StepRule step_rule = StepRule::CubeRootEps;
  double fixed_step = 1e-6;
  FdScheme scheme = FdScheme::Central;
  // +1 or -1. With FdScheme::Forward the quotient is taken from this side,
  // which should be the side on which the function stays smooth.
  int forward_direction = 1;
};

/// Per-coordinate step: max(1, |x_i|) * eps^(1/3) under CubeRootEps.
double fd_step(const FdConfig& config, double xi);

using VectorMap = std::function<Vector(const Vector&)>;

/// Finite-difference Jacobian (rows = outputs) of `fun` at x. Throws
/// NodeError(UndefinedGradient) if `fun` produces a non-finite value.
Matrix fd_jacobian(const VectorMap& fun, const Vector& x, const FdConfig& config = {});

/// Gradient of a scalar function as a column vector.
Vector fd_gradient(const std::function<double(const Vector&)>& fun, const Vector& x,
                   const FdConfig& config = {});

/// Second-derivative blocks of the objective and of every constraint at (x, y).
struct HessianBlocks {
  Matrix H_f;  // D_YY f, m x m, symmetrized
  Matrix B_f;  // D_XY f, m x n
  std::vector<Matrix> H_eq, B_eq;      // one per h_i
  std::vector<Matrix> H_ineq, B_ineq;  // one per g_i
};

HessianBlocks fd_hessian_blocks(const DeclarativeProblem& problem, const Vector& x, const Vector& y);

/// Evaluates first- and second-order pieces of a problem, preferring the
/// analytic callbacks and falling back to central differences for whatever
/// is missing. Stateless apart from a reference to the problem.
class ProblemDerivatives {
 public:
  explicit ProblemDerivatives(const DeclarativeProblem& problem) : problem_(problem) {}

  const DeclarativeProblem& problem() const { return problem_; }

  Vector f_y(const Vector& x, const Vector& u) const;
  Matrix f_yy(const Vector& x, const Vector& u) const;
  Matrix f_xy(const Vector& x, const Vector& u) const;
  Vector f_x(const Vector& x, const Vector& u) const;

  Vector h(const Vector& x, const Vector& u) const;
  Matrix h_y(const Vector& x, const Vector& u) const;
  Matrix h_x(const Vector& x, const Vector& u) const;
  std::vector<Matrix> h_yy(const Vector& x, const Vector& u) const;
  std::vector<Matrix> h_xy(const Vector& x, const Vector& u) const;

  Vector g(const Vector& x, const Vector& u) const;
  Matrix g_y(const Vector& x, const Vector& u) const;
  Matrix g_x(const Vector& x, const Vector& u) const;
  std::vector<Matrix> g_yy(const Vector& x, const Vector& u) const;
  std::vector<Matrix> g_xy(const Vector& x, const Vector& u) const;

  /// Column j of D_XY L and of D_X h~ for the Lagrangian
  /// L = f - sum_k lambda_k h~_k, where h~ stacks the listed equality rows
  /// followed by the listed inequality rows. Uses O(m + n) scratch when the
  /// mixed derivatives are numeric.
  void lagrangian_columns(const Vector& x, const Vector& u, const Vector& stacked_lambda,
                          const std::vector<Index>& eq_rows, const std::vector<Index>& ineq_rows,
                          Index j, Eigen::Ref<Vector> b_col, Eigen::Ref<Vector> c_col) const;

  bool has_analytic_mixed() const;

 private:
  const DeclarativeProblem& problem_;
};

/// First-order residuals of a candidate solution.
KktResiduals kkt_residuals(const DeclarativeProblem& problem, const Vector& x,
                           const Solution& solution);

}  // namespace ddn
