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

#include <optional>

namespace ddn {

struct SolverOptions {
  double stationarity_tol = kStationarityTol;
  double feasibility_tol = kFeasibilityTol;
  double active_tol = 1e-8;
  int max_iters = 200;
  int max_active_set_changes = 50;
};

/// Damped Newton on f(x, .) with Levenberg regularization when the Hessian
/// is not positive definite. Throws SolverDiverged on failure.
Solution solve_unconstrained(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                             const SolverOptions& options = {});

/// Newton iteration on the KKT system of the equality-constrained problem
/// (inequalities ignored). Converges to the KKT point nearest y0.
Solution solve_equality(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                        const SolverOptions& options = {});

/// Primal active-set method wrapped around the KKT Newton iteration. Meant for
/// small q; the working set starts with the inequalities active at y0.
Solution solve_constrained(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                           const SolverOptions& options = {});

/// Picks the solver matching the problem class.
Solution solve(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
               const SolverOptions& options = {});

}  // namespace ddn
