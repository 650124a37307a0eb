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

#include "ddn/problems.hpp"
#include "ddn/solve.hpp"
#include "support.hpp"

#include <cmath>

namespace ddn {
namespace {

using test::max_abs;

TEST(Solve, UnconstrainedSmoothObjective) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 5, 4);
    const DeclarativeProblem p = smooth_problem(obj, DerivativeLevel::FirstOrder);
    const Vector x = test::random_vector(rng, 4);
    const Solution s = solve(p, x, Vector::Zero(5));
    EXPECT_TRUE(s.solver_info.converged);
    EXPECT_LE(max_abs(obj.grad_u(x, s.y)), 1e-8);
    EXPECT_DOUBLE_EQ(s.objective_value, obj.value(x, s.y));
  }
}

TEST(Solve, EqualityConstrainedSatisfiesKkt) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 4, 3);
    const DeclarativeProblem p = sphere_equality_problem(obj, test::random_vector(rng, 3), true);
    const Vector x = test::random_vector(rng, 3);
    const Solution s = solve(p, x, test::random_vector(rng, 4).normalized());
    const KktResiduals r = kkt_residuals(p, x, s);
    EXPECT_LE(r.stationarity, 1e-8);
    EXPECT_LE(r.eq_violation, 1e-8);
    EXPECT_EQ(s.multipliers.size(), 1);
  }
}

TEST(Solve, InequalityMultipliersHaveTheRightSign) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 4, 3);
    const Matrix G = test::random_matrix(rng, 3, 4);
    const Matrix E = test::random_matrix(rng, 3, 3);
    const Vector e = test::random_vector(rng, 3, -0.3, 0.0);
    const DeclarativeProblem p = linear_inequality_problem(obj, G, E, e);
    const Vector x = test::random_vector(rng, 3);
    const Solution s = solve(p, x, Vector::Zero(4));
    const KktResiduals r = kkt_residuals(p, x, s);
    EXPECT_LE(r.stationarity, 1e-8);
    EXPECT_LE(r.ineq_violation, 1e-8);
    EXPECT_LE(r.max_active_multiplier, 1e-12);
    ASSERT_EQ(s.active_set.size(), 3u);
    for (Index i = 0; i < 3; ++i) {
      if (!s.active_set[static_cast<std::size_t>(i)]) EXPECT_EQ(s.multipliers[i], 0.0);
    }
  }
}

TEST(Solve, ReportsDivergence) {
  DeclarativeProblem p;
  p.input_dim = 1;
  p.output_dim = 1;
  p.objective = [](const Vector& x, const Vector& u) { return x[0] * u[0]; };
  try {
    solve(p, Vector::Ones(1), Vector::Zero(1));
    FAIL() << "expected SolverDiverged";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SolverDiverged);
  }
}

TEST(Solve, RejectsWrongStartDimension) {
  const DeclarativeProblem p = test::distance_problem(3);
  try {
    solve(p, Vector::Zero(3), Vector::Zero(2));
    FAIL() << "expected DimensionMismatch";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Solve, FeasibilityProblemIsPinnedByConstraints) {
  std::mt19937_64 rng(4);
  const Matrix M = test::random_matrix(rng, 3, 2);
  const Vector c = test::random_vector(rng, 3);
  const DeclarativeProblem p = feasibility_problem(M, c);
  const Vector x = test::random_vector(rng, 2);
  const Solution s = solve(p, x, Vector::Zero(3));
  const Vector rhs = M * x + c;
  const Vector lhs = (s.y.array() + 0.1 * s.y.array().cube()).matrix();
  EXPECT_LE(max_abs(lhs - rhs), 1e-8);
}

TEST(Solve, LeavesUnconstrainedSaddle) {
  // f = u0^4/4 - u0^2/2 + u1^2/2 has a saddle at the origin.
  DeclarativeProblem p;
  p.input_dim = 1;
  p.output_dim = 2;
  p.objective = [](const Vector&, const Vector& u) {
    return 0.25 * std::pow(u[0], 4) - 0.5 * u[0] * u[0] + 0.5 * u[1] * u[1];
  };
  const Solution s = solve(p, Vector::Zero(1), Vector::Zero(2));
  EXPECT_NEAR(std::abs(s.y[0]), 1.0, 1e-6);
  EXPECT_NEAR(s.y[1], 0.0, 1e-8);
}

TEST(Solve, LeavesConstrainedMaximum) {
  // min u1 on the unit circle, started at the maximizer (0, 1).
  DeclarativeProblem p;
  p.input_dim = 1;
  p.output_dim = 2;
  p.num_eq = 1;
  p.objective = [](const Vector&, const Vector& u) { return u[1]; };
  p.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector(Vector::Constant(1, u.squaredNorm() - 1.0));
  };
  Vector y0(2);
  y0 << 0.0, 1.0;
  const Solution s = solve(p, Vector::Zero(1), y0);
  EXPECT_NEAR(s.y[0], 0.0, 1e-6);
  EXPECT_NEAR(s.y[1], -1.0, 1e-8);
  EXPECT_NEAR(s.multipliers[0], -0.5, 1e-6);
}

}  // namespace
}  // namespace ddn
