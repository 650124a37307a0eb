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
#include "ddn/numdiff.hpp"
#include "ddn/solve.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace ddn::test {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline double rel_err(const Matrix& a, const Matrix& ref) {
  const double den = ref.norm();
  return den == 0.0 ? (a - ref).norm() : (a - ref).norm() / den;
}

// Solver output as a function of x with tight tolerances, started from y0.
inline VectorMap solver_map(const DeclarativeProblem& problem, Vector y0) {
  return [&problem, y0](const Vector& x) {
    SolverOptions opt;
    opt.stationarity_tol = 1e-10;
    opt.feasibility_tol = 1e-10;
    return solve(problem, x, y0, opt).y;
  };
}

inline Vector random_vector(std::mt19937_64& rng, Index n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

// f = 1/2 ||u - x||^2 with closed-form derivatives.
inline DeclarativeProblem distance_problem(Index n) {
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  p.objective = [](const Vector& x, const Vector& u) { return 0.5 * (u - x).squaredNorm(); };
  p.derivatives.f_y = [](const Vector& x, const Vector& u) { return Vector(u - x); };
  p.derivatives.f_yy = [n](const Vector&, const Vector&) { return Matrix(Matrix::Identity(n, n)); };
  p.derivatives.f_xy = [n](const Vector&, const Vector&) { return Matrix(-Matrix::Identity(n, n)); };
  return p;
}

#define EXPECT_MATRIX_NEAR(a, b, tol)                                              \
  do {                                                                             \
    const ::ddn::Matrix ea_ = (a);                                                 \
    const ::ddn::Matrix eb_ = (b);                                                 \
    ASSERT_EQ(ea_.rows(), eb_.rows());                                             \
    ASSERT_EQ(ea_.cols(), eb_.cols());                                             \
    EXPECT_LE(::ddn::test::max_abs(ea_ - eb_), (tol)) << "got\n" << ea_ << "\nwant\n" << eb_; \
  } while (0)

}  // namespace ddn::test
