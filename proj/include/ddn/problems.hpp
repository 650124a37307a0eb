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

#include <random>

namespace ddn {

/// Seeded problem generators used by the gradient checker, the demos and
/// the tests. Every generated objective is smooth and strongly convex in u:
///   f(x, u) = 1/2 u^T Q u - u^T P x + sum_i w_i log cosh(u_i - r_i^T x)
///             + 0.1 sum_i sin(x_{i mod n}) u_i^2,  Q >= 0.5 I.
struct SmoothObjective {
  Matrix Q;  // m x m
  Matrix P;  // m x n
  Matrix R;  // m x n
  Vector w;  // m

  Index output_dim() const { return Q.rows(); }
  Index input_dim() const { return P.cols(); }

  double value(const Vector& x, const Vector& u) const;
  Vector grad_u(const Vector& x, const Vector& u) const;
  Matrix hess_uu(const Vector& x, const Vector& u) const;
  Matrix hess_xu(const Vector& x, const Vector& u) const;  // m x n
};

SmoothObjective random_smooth_objective(std::mt19937_64& rng, Index m, Index n);

enum class DerivativeLevel { ValuesOnly, FirstOrder, Full };

/// Unconstrained node from a smooth objective.
DeclarativeProblem smooth_problem(const SmoothObjective& obj,
                                  DerivativeLevel level = DerivativeLevel::Full);

/// A u = E x + d with p rows. E = 0 gives fixed linear constraints.
struct LinearConstraints {
  Matrix A;  // p x m
  Matrix E;  // p x n
  Vector d;  // p
};

LinearConstraints random_linear_constraints(std::mt19937_64& rng, Index p, Index m, Index n,
                                            bool depend_on_x);

DeclarativeProblem linear_equality_problem(const SmoothObjective& obj, const LinearConstraints& c,
                                           DerivativeLevel level = DerivativeLevel::Full);

/// ||u||^2 = rho(x) with rho(x) = 1 + 0.1 (a^T x)^2, or rho = 1 when
/// `depend_on_x` is false.
DeclarativeProblem sphere_equality_problem(const SmoothObjective& obj, const Vector& a,
                                           bool depend_on_x,
                                           DerivativeLevel level = DerivativeLevel::Full);

/// Linear inequalities G u - E x - e <= 0 with q rows.
DeclarativeProblem linear_inequality_problem(const SmoothObjective& obj, const Matrix& G,
                                             const Matrix& E, const Vector& e);

/// m equations u_i + 0.1 u_i^3 = (M x + c)_i that pin u completely; the
/// objective 1/2 ||u||^2 plays no role in the derivative.
DeclarativeProblem feasibility_problem(const Matrix& M, const Vector& c);

/// y in argmin 0 s.t. (u - 1)^2 - x^2 = 0, with solutions y = 1 +- x.
DeclarativeProblem pathological_problem();

/// f(x, u) = -x^T u / ||u||: every positive multiple of x is optimal.
DeclarativeProblem alignment_problem(Index n);

/// argmin -x^T u s.t. u^T u - 1 = 0 (the normalized alignment problem).
DeclarativeProblem normalized_alignment_problem(Index n);

}  // namespace ddn
