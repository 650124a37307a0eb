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

#include "ddn/implicit_diff.hpp"
#include "ddn/pooling.hpp"
#include "ddn/problems.hpp"
#include "ddn/projection.hpp"
#include "ddn/solve.hpp"
#include "support.hpp"

#include <cmath>

namespace ddn {
namespace {

using test::distance_problem;
using test::max_abs;
using test::rel_err;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

// f = 1/2 (u - x)^T Q (u - x), Q SPD and not diagonal.
DeclarativeProblem metric_problem(const Matrix& Q) {
  const Index m = Q.rows();
  DeclarativeProblem p;
  p.input_dim = m;
  p.output_dim = m;
  p.objective = [Q](const Vector& x, const Vector& u) { return 0.5 * (u - x).dot(Q * (u - x)); };
  p.derivatives.f_y = [Q](const Vector& x, const Vector& u) { return Vector(Q * (u - x)); };
  p.derivatives.f_yy = [Q](const Vector&, const Vector&) { return Q; };
  p.derivatives.f_xy = [Q](const Vector&, const Vector&) { return Matrix(-Q); };
  return p;
}

Matrix test_metric() {
  Matrix Q(2, 2);
  Q << 2.0, 0.5, 0.5, 1.0;
  return Q;
}

// ---------------------------------------------------------------------------

TEST(Unconstrained, DistanceGivesIdentity) {
  const DeclarativeProblem p = distance_problem(4);
  const Vector x = vec({0.3, -1.0, 2.0, 0.0});
  const Jacobian J = gradient_unconstrained(p, x, x);
  EXPECT_LE(max_abs(J.matrix - Matrix::Identity(4, 4)), 1e-12);
  EXPECT_FALSE(J.one_sided);
}

TEST(Unconstrained, QuadraticPoolingIsMean) {
  const PenaltySpec spec{Penalty::Quadratic, 1.0};
  const DeclarativeProblem p = pooling_problem(3, spec, PoolingDerivatives::None);
  const Vector x = vec({0.5, -1.5, 4.0});
  const Jacobian J = gradient_unconstrained(p, x, Vector::Constant(1, x.mean()));
  EXPECT_LE(max_abs(J.matrix - Matrix::Constant(1, 3, 1.0 / 3.0)), 1e-6);
}

TEST(Unconstrained, SineTargetMatchesCosine) {
  DeclarativeProblem p;
  p.input_dim = 1;
  p.output_dim = 1;
  p.objective = [](const Vector& x, const Vector& u) {
    return 0.5 * std::pow(u[0] - std::sin(x[0]), 2);
  };
  const Vector x = Vector::Constant(1, 0.3);
  const Solution s = solve(p, x, Vector::Zero(1));
  const Jacobian J = gradient_unconstrained(p, x, s.y);
  const Matrix fd = fd_jacobian(test::solver_map(p, Vector::Zero(1)), x);
  EXPECT_LE(std::abs(J.matrix(0, 0) - fd(0, 0)) / std::abs(fd(0, 0)), 1e-6);
  EXPECT_NEAR(J.matrix(0, 0), std::cos(0.3), 1e-6);
}

TEST(Unconstrained, SingularHessianWithoutFallback) {
  const DeclarativeProblem p = alignment_problem(3);
  const Vector x = vec({1.0, 2.0, -0.5});
  GradientOptions opt;
  opt.allow_pseudo_inverse_fallback = false;
  try {
    gradient_unconstrained(p, x, x / x.norm(), opt);
    FAIL() << "expected SingularHessian";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularHessian);
  }
  const Jacobian J = gradient_unconstrained(p, x, x / x.norm());
  EXPECT_TRUE(J.rank_deficient_fallback);
}

TEST(Unconstrained, ImperativeReductionReproducesTanh) {
  const Index n = 4;
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  auto target = [](const Vector& x) { return Vector(x.array().tanh()); };
  p.objective = [target](const Vector& x, const Vector& u) {
    return 0.5 * (u - target(x)).squaredNorm();
  };
  p.derivatives.f_y = [target](const Vector& x, const Vector& u) { return Vector(u - target(x)); };
  p.derivatives.f_yy = [n](const Vector&, const Vector&) { return Matrix(Matrix::Identity(n, n)); };
  const Vector x = vec({-1.2, 0.1, 0.7, 2.0});
  const Jacobian J = gradient_unconstrained(p, x, target(x));
  const Vector d = (1.0 - x.array().tanh().square()).matrix();
  EXPECT_LE(max_abs(J.matrix - Matrix(d.asDiagonal())), 1e-8);
}

TEST(Unconstrained, MatchesEmptyConstraintStack) {
  std::mt19937_64 rng(5);
  const Index m = 4, n = 3;
  Matrix H = test::random_matrix(rng, m, m);
  H = H * H.transpose() + Matrix::Identity(m, m);
  const Matrix B = test::random_matrix(rng, m, n);
  ColumnSource cols = [B](Index j, Eigen::Ref<Vector> b, Eigen::Ref<Vector>) { b = B.col(j); };
  const Jacobian a = GradientContext::unconstrained(H, n, cols).jacobian();
  const Jacobian b = GradientContext::constrained(H, Matrix(0, m), n, cols).jacobian();
  EXPECT_LE(max_abs(a.matrix - b.matrix), 1e-12);
  EXPECT_LE(max_abs(a.matrix + H.inverse() * B), 1e-10);
}

// ---------------------------------------------------------------------------

TEST(Multipliers, SingleRow) {
  Matrix A(1, 2);
  A << 1.0, 0.0;
  const Vector lambda = recover_multipliers(A, vec({2.0, 0.0}));
  ASSERT_EQ(lambda.size(), 1);
  EXPECT_NEAR(lambda[0], 2.0, 1e-14);
}

TEST(Multipliers, SphereProjection) {
  const ProjectionSpec spec;
  const DeclarativeProblem p = projection_problem(2, spec);
  const Vector x = vec({3.0, 4.0});
  const Vector y = vec({0.6, 0.8});
  const ProblemDerivatives d(p);
  const Vector lambda = recover_multipliers(d.h_y(x, y), d.f_y(x, y));
  EXPECT_NEAR(lambda[0], 1.0 - 5.0, 1e-12);
}

TEST(Multipliers, RandomRowSpace) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const Matrix A = test::random_matrix(rng, 2, 4);
    const Vector l0 = test::random_vector(rng, 2, -3.0, 3.0);
    const Vector g = A.transpose() * l0;
    const Vector l = recover_multipliers(A, g);
    EXPECT_LE(max_abs(A.transpose() * l - g), 1e-10);
    EXPECT_LE(max_abs(l - l0), 1e-9);
  }
}

TEST(Multipliers, RankDeficientRejected) {
  Matrix A(2, 3);
  A << 1.0, 2.0, 3.0, 2.0, 4.0, 6.0;
  try {
    recover_multipliers(A, vec({1.0, 2.0, 3.0}));
    FAIL() << "expected RankDeficientConstraints";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficientConstraints);
  }
}

TEST(RankRepair, DropsDependentRows) {
  Matrix A(3, 3);
  A << 1.0, 0.0, 1.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0;
  const std::vector<Index> rows = independent_rows(A);
  EXPECT_EQ(rows.size(), 2u);
}

// ---------------------------------------------------------------------------

TEST(Equality, SphereProjectionExample) {
  const DeclarativeProblem p = projection_problem(2, ProjectionSpec{});
  const Jacobian J = gradient_equality(p, vec({3.0, 4.0}), vec({0.6, 0.8}));
  Matrix want(2, 2);
  want << 0.128, -0.096, -0.096, 0.072;
  EXPECT_LE(max_abs(J.matrix - want), 1e-12);
}

TEST(Equality, QuaternionAlignment) {
  const DeclarativeProblem p = normalized_alignment_problem(4);
  const Vector x = vec({0.5, -1.0, 2.0, 0.25});
  const double a = 1.0 / x.norm();
  const Matrix want = a * (Matrix::Identity(4, 4) - x * x.transpose() / x.squaredNorm());
  const Jacobian J = gradient_equality(p, x, x / x.norm());
  EXPECT_LE(max_abs(J.matrix - want), 1e-8);
}

// f = 1/2 u^T Q u - u^T P x  s.t.  A u = E x + d
struct Qp {
  Matrix Q, P, A, E;
  Vector d;

  DeclarativeProblem problem() const {
    DeclarativeProblem p;
    p.input_dim = P.cols();
    p.output_dim = Q.rows();
    p.num_eq = A.rows();
    const Qp self = *this;
    p.objective = [self](const Vector& x, const Vector& u) {
      return 0.5 * u.dot(self.Q * u) - u.dot(self.P * x);
    };
    p.eq_constraints = [self](const Vector& x, const Vector& u) {
      return Vector(self.A * u - self.E * x - self.d);
    };
    p.derivatives.f_y = [self](const Vector& x, const Vector& u) {
      return Vector(self.Q * u - self.P * x);
    };
    p.derivatives.h_y = [self](const Vector&, const Vector&) { return self.A; };
    p.derivatives.h_x = [self](const Vector&, const Vector&) { return Matrix(-self.E); };
    return p;
  }

  // Closed-form solution map from the KKT linear system.
  Matrix kkt_jacobian() const {
    const Index m = Q.rows(), k = A.rows(), n = P.cols();
    Matrix K = Matrix::Zero(m + k, m + k);
    K.topLeftCorner(m, m) = Q;
    K.topRightCorner(m, k) = A.transpose();
    K.bottomLeftCorner(k, m) = A;
    Matrix R(m + k, n);
    R.topRows(m) = P;
    R.bottomRows(k) = E;
    return K.partialPivLu().solve(R).topRows(m);
  }
};

TEST(Equality, RandomQpAgainstOracles) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    Qp qp;
    const Matrix G = test::random_matrix(rng, 5, 5);
    qp.Q = G * G.transpose() + 0.5 * Matrix::Identity(5, 5);
    qp.P = test::random_matrix(rng, 5, 3);
    qp.A = test::random_matrix(rng, 2, 5);
    qp.E = test::random_matrix(rng, 2, 3);
    qp.d = test::random_vector(rng, 2);
    const DeclarativeProblem p = qp.problem();
    const Vector x = test::random_vector(rng, 3);
    const Solution s = solve(p, x, Vector::Zero(5));
    const Jacobian J = gradient_equality(p, x, s.y);
    const Matrix fd = fd_jacobian(test::solver_map(p, Vector::Zero(5)), x);
    EXPECT_LE(rel_err(J.matrix, fd), 1e-5);
    EXPECT_LE(rel_err(J.matrix, qp.kkt_jacobian()), 1e-7);
    // Differentiated feasibility: A Dy + C = 0 with C = -E.
    EXPECT_LE(max_abs(qp.A * J.matrix - qp.E), 1e-7);
  }
}

TEST(Equality, RankRepairOnDuplicatedConstraint) {
  DeclarativeProblem single = distance_problem(3);
  single.num_eq = 1;
  single.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector(Vector::Constant(1, u.sum() - 1.0));
  };
  DeclarativeProblem doubled = single;
  doubled.num_eq = 2;
  doubled.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector(Vector::Constant(2, u.sum() - 1.0).cwiseProduct(vec({1.0, 2.0})));
  };
  const Vector x = vec({0.4, -0.2, 1.3});
  const Vector y = x - Vector::Constant(3, (x.sum() - 1.0) / 3.0);
  const Jacobian a = gradient_equality(single, x, y);
  const Jacobian b = gradient_equality(doubled, x, y);
  EXPECT_LE(max_abs(a.matrix - b.matrix), 1e-9);
  EXPECT_LE(max_abs(a.matrix - (Matrix::Identity(3, 3) - Matrix::Constant(3, 3, 1.0 / 3.0))),
            1e-9);
}

TEST(Equality, GeometricInvariantForFixedConstraint) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 4, 3);
    const LinearConstraints c = random_linear_constraints(rng, 1, 4, 3, false);
    const DeclarativeProblem p = linear_equality_problem(obj, c);
    const Vector x = test::random_vector(rng, 3);
    const Solution s = solve(p, x, Vector::Zero(4));
    const Jacobian J = gradient_equality(p, x, s.y);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(obj.hess_uu(x, s.y));
    const Matrix root = es.operatorSqrt();
    const Matrix inv_root = es.operatorInverseSqrt();
    const Vector a = c.A.row(0).transpose();
    const Vector dir = inv_root * a;
    EXPECT_LE(max_abs(dir.transpose() * (root * J.matrix)), 1e-8);
  }
}

// ---------------------------------------------------------------------------
// One inequality u0 + u1 - 1 <= 0 under a non-diagonal metric.

DeclarativeProblem halfplane_problem(bool as_equality) {
  DeclarativeProblem p = metric_problem(test_metric());
  auto g = [](const Vector&, const Vector& u) { return Vector(Vector::Constant(1, u.sum() - 1.0)); };
  auto gy = [](const Vector&, const Vector&) { return Matrix(Matrix::Ones(1, 2)); };
  auto gx = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 2)); };
  auto zero = [](const Vector&, const Vector&) { return std::vector<Matrix>{Matrix::Zero(2, 2)}; };
  if (as_equality) {
    p.num_eq = 1;
    p.eq_constraints = g;
    p.derivatives.h_y = gy;
    p.derivatives.h_x = gx;
    p.derivatives.h_yy = zero;
    p.derivatives.h_xy = zero;
  } else {
    p.num_ineq = 1;
    p.ineq_constraints = g;
    p.derivatives.g_y = gy;
    p.derivatives.g_x = gx;
    p.derivatives.g_yy = zero;
    p.derivatives.g_xy = zero;
  }
  return p;
}

TEST(Inequality, InactiveMatchesUnconstrained) {
  const DeclarativeProblem p = halfplane_problem(false);
  const Vector x = vec({0.2, 0.3});
  const Solution s = solve(p, x, Vector::Zero(2));
  EXPECT_FALSE(s.active_set[0]);
  const Jacobian J = gradient_inequality(p, x, s.y, s.multipliers);
  const Jacobian U = gradient_unconstrained(metric_problem(test_metric()), x, s.y);
  EXPECT_LE(max_abs(J.matrix - U.matrix), 1e-8);
  EXPECT_FALSE(J.one_sided);
}

TEST(Inequality, ActiveMatchesEquality) {
  const DeclarativeProblem p = halfplane_problem(false);
  const Vector x = vec({1.0, 0.8});
  const Solution s = solve(p, x, Vector::Zero(2));
  ASSERT_TRUE(s.active_set[0]);
  EXPECT_LT(s.multipliers[0], -1e-3);
  const Jacobian J = gradient_inequality(p, x, s.y, s.multipliers);
  const Jacobian E = gradient_equality(halfplane_problem(true), x, s.y);
  EXPECT_LE(max_abs(J.matrix - E.matrix), 1e-8);
  EXPECT_FALSE(J.one_sided);
  // Closed form: I - Q^-1 a (a^T Q^-1 a)^-1 a^T
  const Matrix Qi = test_metric().inverse();
  const Vector a = Vector::Ones(2);
  const Matrix want = Matrix::Identity(2, 2) - Qi * a * a.transpose() / a.dot(Qi * a);
  EXPECT_LE(max_abs(J.matrix - want), 1e-8);
}

TEST(Inequality, ZeroMultiplierIsOneSided) {
  const DeclarativeProblem p = halfplane_problem(false);
  const Vector x = vec({0.25, 0.75});
  const Vector lambda = Vector::Zero(1);
  const Jacobian J = gradient_inequality(p, x, x, lambda);
  EXPECT_TRUE(J.one_sided);
  const Jacobian E = gradient_equality(halfplane_problem(true), x, x, lambda);
  EXPECT_LE(max_abs(J.matrix - E.matrix), 1e-12);

  GradientOptions opt;
  opt.zero_multiplier_rule = ZeroMultiplierRule::UnconstrainedBranch;
  const Jacobian U = gradient_inequality(p, x, x, lambda, opt);
  EXPECT_TRUE(U.one_sided);
  EXPECT_LE(max_abs(U.matrix - Matrix::Identity(2, 2)), 1e-12);

  opt.zero_multiplier_rule = ZeroMultiplierRule::Reject;
  try {
    gradient_inequality(p, x, x, lambda, opt);
    FAIL() << "expected UndefinedGradient";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedGradient);
  }
}

TEST(Inequality, ActiveSetDetection) {
  const DeclarativeProblem p = halfplane_problem(false);
  const Vector x = Vector::Zero(2);
  EXPECT_TRUE(active_inequalities(p, x, vec({0.5, 0.5 - 5e-9})).size() == 1);
  EXPECT_TRUE(active_inequalities(p, x, vec({0.5, 0.4})).empty());
}

TEST(Inequality, RandomLinearInequalitiesAgainstOracle) {
  std::mt19937_64 rng(31);
  int active_seen = 0;
  for (int t = 0; t < 10; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 4, 3);
    const Matrix G = test::random_matrix(rng, 2, 4);
    const Matrix E = test::random_matrix(rng, 2, 3);
    const Vector e = test::random_vector(rng, 2, -0.5, 0.0);
    const DeclarativeProblem p = linear_inequality_problem(obj, G, E, e);
    const Vector x = test::random_vector(rng, 3);
    const Solution s = solve(p, x, Vector::Zero(4));
    for (bool a : s.active_set) active_seen += a ? 1 : 0;
    bool degenerate = false;
    for (Index i = 0; i < 2; ++i) {
      const double gi = (G.row(i) * s.y - E.row(i) * x)(0) - e[i];
      if (std::abs(gi) < 1e-6 && std::abs(s.multipliers[i]) < 1e-6) degenerate = true;
    }
    if (degenerate) continue;
    const Jacobian J = gradient(p, x, s);
    const Matrix fd = fd_jacobian(test::solver_map(p, Vector::Zero(4)), x);
    EXPECT_LE(rel_err(J.matrix, fd), 1e-5) << "trial " << t;
  }
  EXPECT_GT(active_seen, 0);
}

// ---------------------------------------------------------------------------

DeclarativeProblem constraint_only(Index n, std::function<Vector(const Vector&, const Vector&)> h) {
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  p.num_eq = n;
  p.objective = [](const Vector&, const Vector&) { return 0.0; };
  p.eq_constraints = std::move(h);
  return p;
}

TEST(Feasibility, IdentityConstraint) {
  const DeclarativeProblem p =
      constraint_only(3, [](const Vector& x, const Vector& u) { return Vector(u - x); });
  const Vector x = vec({1.0, -2.0, 0.5});
  const Jacobian J = gradient_feasibility(p, x, x);
  EXPECT_LE(max_abs(J.matrix - Matrix::Identity(3, 3)), 1e-9);
}

TEST(Feasibility, LinearSystemGivesInverse) {
  std::mt19937_64 rng(2);
  const Matrix A = test::random_matrix(rng, 3, 3) + 3.0 * Matrix::Identity(3, 3);
  const DeclarativeProblem p =
      constraint_only(3, [A](const Vector& x, const Vector& u) { return Vector(A * u - x); });
  const Vector x = vec({0.3, 0.1, -0.7});
  const Vector y = A.partialPivLu().solve(x);
  const Jacobian J = gradient_feasibility(p, x, y);
  const Matrix fd = fd_jacobian([&A](const Vector& v) { return Vector(A.partialPivLu().solve(v)); }, x);
  EXPECT_LE(max_abs(J.matrix - fd), 1e-8);
  EXPECT_LE(max_abs(J.matrix - A.inverse()), 1e-8);
}

TEST(Feasibility, PathologicalBranches) {
  const DeclarativeProblem p = pathological_problem();
  const Vector x = Vector::Constant(1, 0.5);
  EXPECT_EQ(gradient_feasibility(p, x, Vector::Constant(1, 1.5)).matrix(0, 0), 1.0);
  EXPECT_EQ(gradient_feasibility(p, x, Vector::Constant(1, 0.5)).matrix(0, 0), -1.0);
}

TEST(Feasibility, ZeroJacobianRejected) {
  const DeclarativeProblem p = constraint_only(2, [](const Vector& x, const Vector& u) {
    return Vector(u.array().square().matrix() - x);
  });
  try {
    gradient_feasibility(p, Vector::Zero(2), Vector::Zero(2));
    FAIL() << "expected RankDeficientConstraints";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficientConstraints);
  }
}

// ---------------------------------------------------------------------------

TEST(SingleConstraint, SphereProjection) {
  const DeclarativeProblem p = projection_problem(2, ProjectionSpec{});
  const Jacobian J = gradient_single_constraint(p, vec({3.0, 4.0}), vec({0.6, 0.8}));
  Matrix want(2, 2);
  want << 0.128, -0.096, -0.096, 0.072;
  EXPECT_LE(max_abs(J.matrix - want), 1e-12);
  EXPECT_LE(max_abs(vec({0.6, 0.8}).transpose() * J.matrix), 1e-8);
}

TEST(SingleConstraint, AgreesWithGeneralFormula) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 4, 3);
    const DeclarativeProblem p = sphere_equality_problem(obj, Vector::Ones(3), false);
    const Vector x = test::random_vector(rng, 3);
    const Vector y0 = test::random_vector(rng, 4).normalized();
    const Solution s = solve(p, x, y0);
    const Jacobian a = gradient_single_constraint(p, x, s.y);
    const Jacobian b = gradient_equality(p, x, s.y);
    EXPECT_LE(max_abs(a.matrix - b.matrix), 1e-10);
    EXPECT_LE(max_abs(s.y.transpose() * a.matrix), 1e-8);
  }
}

TEST(SingleConstraint, VanishingNormalRejected) {
  DeclarativeProblem p = distance_problem(2);
  p.num_eq = 1;
  p.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector(Vector::Constant(1, u.squaredNorm()));
  };
  try {
    gradient_single_constraint(p, Vector::Zero(2), Vector::Zero(2));
    FAIL() << "expected UndefinedGradient";
  } catch (const NodeError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UndefinedGradient);
  }
}

// ---------------------------------------------------------------------------

TEST(LinearEquality, CenteringProjector) {
  const Index m = 5;
  DeclarativeProblem p = distance_problem(m);
  p.num_eq = 1;
  p.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector(Vector::Constant(1, u.sum() - 2.0));
  };
  p.derivatives.h_y = [m](const Vector&, const Vector&) { return Matrix(Matrix::Ones(1, m)); };
  p.derivatives.h_x = [m](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, m)); };
  p.derivatives.h_yy = [m](const Vector&, const Vector&) {
    return std::vector<Matrix>{Matrix::Zero(m, m)};
  };
  p.derivatives.h_xy = [m](const Vector&, const Vector&) {
    return std::vector<Matrix>{Matrix::Zero(m, m)};
  };
  const Vector x = vec({0.1, 0.9, -0.4, 1.6, 0.0});
  const Vector y = x - Vector::Constant(m, (x.sum() - 2.0) / m);
  const Matrix A = Matrix::Ones(1, m);
  const Jacobian J = gradient_linear_equality(p, x, y, A);
  const Matrix want = Matrix::Identity(m, m) - Matrix::Constant(m, m, 1.0 / m);
  EXPECT_LE(max_abs(J.matrix - want), 1e-12);
  EXPECT_LE(max_abs(J.matrix - gradient_equality(p, x, y).matrix), 1e-12);
}

TEST(LinearEquality, RandomAgainstOracle) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const SmoothObjective obj = random_smooth_objective(rng, 6, 4);
    const LinearConstraints c = random_linear_constraints(rng, 2, 6, 4, false);
    const DeclarativeProblem p = linear_equality_problem(obj, c);
    const Vector x = test::random_vector(rng, 4);
    const Solution s = solve(p, x, Vector::Zero(6));
    const Jacobian J = gradient_linear_equality(p, x, s.y, c.A);
    const Matrix fd = fd_jacobian(test::solver_map(p, Vector::Zero(6)), x);
    EXPECT_LE(rel_err(J.matrix, fd), 1e-5);
    EXPECT_LE(max_abs(c.A * J.matrix), 1e-8);
  }
}

// ---------------------------------------------------------------------------

TEST(PseudoInverse, AlignmentExample) {
  const DeclarativeProblem p = alignment_problem(4);
  const Vector x = vec({0.5, -1.0, 2.0, 0.25});
  const Matrix want =
      (Matrix::Identity(4, 4) - x * x.transpose() / x.squaredNorm()) / x.norm();
  const Jacobian J = pseudo_inverse_descent(p, x, x / x.norm());
  EXPECT_TRUE(J.rank_deficient_fallback);
  EXPECT_LE(max_abs(J.matrix - want), 1e-8);
}

TEST(PseudoInverse, ZeroHessianGivesZero) {
  DeclarativeProblem p;
  p.input_dim = 2;
  p.output_dim = 3;
  p.objective = [](const Vector& x, const Vector& u) { return x[0] * u[0] + x[1] * u.sum(); };
  const Jacobian J = pseudo_inverse_descent(p, vec({1.0, 2.0}), vec({0.1, 0.2, 0.3}));
  EXPECT_LE(max_abs(J.matrix), 1e-9);
}

TEST(PseudoInverse, RankOneHessian) {
  const Vector a = vec({1.0, -2.0, 0.5});
  const Vector b = vec({0.3, 1.1});
  DeclarativeProblem p;
  p.input_dim = 2;
  p.output_dim = 3;
  p.objective = [a, b](const Vector& x, const Vector& u) {
    return 0.5 * std::pow(a.dot(u) - b.dot(x), 2);
  };
  p.derivatives.f_y = [a, b](const Vector& x, const Vector& u) {
    return Vector((a.dot(u) - b.dot(x)) * a);
  };
  p.derivatives.f_yy = [a](const Vector&, const Vector&) { return Matrix(a * a.transpose()); };
  p.derivatives.f_xy = [a, b](const Vector&, const Vector&) { return Matrix(-a * b.transpose()); };
  const Vector x = vec({0.4, -0.6});
  const Vector y = a * b.dot(x) / a.squaredNorm();
  const Jacobian J = pseudo_inverse_descent(p, x, y);
  const Matrix H = a * a.transpose();
  EXPECT_LE(max_abs(pseudo_inverse(H) * H * J.matrix - J.matrix), 1e-10);
  EXPECT_LE(max_abs(J.matrix - a * b.transpose() / a.squaredNorm()), 1e-10);
}

TEST(PseudoInverse, Cutoff) {
  Matrix M = Matrix::Zero(2, 2);
  M(0, 0) = 4.0;
  M(1, 1) = 1e-14;
  const Matrix P = pseudo_inverse(M);
  EXPECT_DOUBLE_EQ(P(0, 0), 0.25);
  EXPECT_EQ(P(1, 1), 0.0);
}

// ---------------------------------------------------------------------------

DeclarativeProblem sphere_test_problem(std::mt19937_64& rng, Vector& x, Solution& s) {
  static SmoothObjective obj;
  obj = random_smooth_objective(rng, 4, 7);
  Vector a = test::random_vector(rng, 7);
  DeclarativeProblem p = sphere_equality_problem(obj, a, true);
  x = test::random_vector(rng, 7);
  s = solve(p, x, test::random_vector(rng, 4).normalized());
  return p;
}

TEST(Vjp, BasisVectorsGiveRows) {
  std::mt19937_64 rng(12);
  Vector x;
  Solution s;
  const DeclarativeProblem p = sphere_test_problem(rng, x, s);
  const GradientContext ctx = make_context(p, x, s.y, s.multipliers);
  const Matrix J = ctx.jacobian().matrix;
  for (Index k = 0; k < 4; ++k) {
    const Vector row = ctx.vjp(Vector::Unit(4, k), VjpMode::StreamColumns);
    EXPECT_LE(max_abs(row.transpose() - J.row(k)), 1e-12);
  }
}

TEST(Vjp, StreamEqualsMaterialize) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 10; ++t) {
    Vector x;
    Solution s;
    const DeclarativeProblem p = sphere_test_problem(rng, x, s);
    const GradientContext ctx = make_context(p, x, s.y, s.multipliers);
    const Vector v = test::random_vector(rng, 4);
    const Vector a = vjp(v, ctx, VjpMode::StreamColumns);
    const Vector b = vjp(v, ctx, VjpMode::Materialize);
    EXPECT_LE(max_abs(a - b), 1e-12);
    EXPECT_LE(max_abs(a.transpose() - v.transpose() * ctx.jacobian().matrix), 1e-12);
  }
}

TEST(Vjp, ContextDifferentiatedFeasibility) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 10; ++t) {
    Vector x;
    Solution s;
    const DeclarativeProblem p = sphere_test_problem(rng, x, s);
    const GradientContext ctx = make_context(p, x, s.y, s.multipliers);
    EXPECT_EQ(ctx.path(), GradientPath::Constrained);
    const Matrix J = ctx.jacobian().matrix;
    EXPECT_LE(max_abs(ctx.A() * J + ctx.C()), 1e-7);
    EXPECT_LE(max_abs(ctx.H() - ctx.H().transpose()), 1e-10);
  }
}

TEST(Dispatch, PathsAndShapes) {
  const Vector x = vec({3.0, 4.0});
  const DeclarativeProblem sphere = projection_problem(2, ProjectionSpec{});
  EXPECT_EQ(make_context(sphere, x, vec({0.6, 0.8})).path(), GradientPath::Constrained);
  EXPECT_EQ(make_context(distance_problem(2), x, x).path(), GradientPath::Unconstrained);
  EXPECT_EQ(make_context(alignment_problem(2), x, x / 5.0).path(), GradientPath::PseudoInverse);
  EXPECT_EQ(make_context(pathological_problem(), Vector::Constant(1, 0.5), Vector::Constant(1, 1.5))
                .path(),
            GradientPath::Feasibility);
  const Jacobian J = gradient(sphere, x, project(x, ProjectionSpec{}));
  EXPECT_EQ(J.matrix.rows(), 2);
  EXPECT_EQ(J.matrix.cols(), 2);
}

}  // namespace
}  // namespace ddn
