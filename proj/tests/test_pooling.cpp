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
#include "support.hpp"

#include <cmath>

namespace ddn {
namespace {

using test::max_abs;

const Penalty kAll[] = {Penalty::Quadratic, Penalty::PseudoHuber, Penalty::Huber, Penalty::Welsch,
                        Penalty::TruncatedQuadratic};
const Penalty kSmooth[] = {Penalty::Quadratic, Penalty::PseudoHuber, Penalty::Welsch};

// Dense scan of the pooling objective followed by golden-section refinement.
double grid_search_pool(const Vector& x, const PenaltySpec& spec, double lo, double hi,
                        double step) {
  double best_u = lo;
  double best_f = pooling_objective(x, spec, lo);
  for (double u = lo; u <= hi; u += step) {
    const double f = pooling_objective(x, spec, u);
    if (f < best_f) {
      best_f = f;
      best_u = u;
    }
  }
  double a = best_u - step, b = best_u + step;
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int k = 0; k < 100; ++k) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (pooling_objective(x, spec, c) < pooling_objective(x, spec, d)) {
      b = d;
    } else {
      a = c;
    }
  }
  return 0.5 * (a + b);
}

TEST(Penalty, Values) {
  EXPECT_DOUBLE_EQ(penalty_value({Penalty::Quadratic, 1.0}, 3.0), 4.5);
  const PenaltySpec ph{Penalty::PseudoHuber, 2.0};
  EXPECT_DOUBLE_EQ(penalty_value(ph, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(penalty_d2(ph, 0.0), 1.0);
  EXPECT_NEAR(penalty_value({Penalty::Welsch, 1.0}, 1e3), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(penalty_value({Penalty::Huber, 1.0}, 3.0), 2.5);
  EXPECT_DOUBLE_EQ(penalty_value({Penalty::Huber, 1.0}, 0.5), 0.125);
  EXPECT_DOUBLE_EQ(penalty_value({Penalty::TruncatedQuadratic, 2.0}, 5.0), 2.0);
  EXPECT_DOUBLE_EQ(penalty_value({Penalty::TruncatedQuadratic, 2.0}, 1.0), 0.5);
  EXPECT_NEAR(penalty_value({Penalty::PseudoHuber, 2.0}, 3.0),
              4.0 * (std::sqrt(1.0 + 9.0 / 4.0) - 1.0), 1e-15);
}

TEST(Penalty, DerivativesMatchDifferences) {
  for (Penalty kind : kAll) {
    const PenaltySpec spec{kind, 1.3};
    for (double z : {-2.7, -0.4, 0.1, 0.9, 3.5}) {
      const double h = 1e-6;
      const double d1 = (penalty_value(spec, z + h) - penalty_value(spec, z - h)) / (2 * h);
      const double d2 = (penalty_d1(spec, z + h) - penalty_d1(spec, z - h)) / (2 * h);
      EXPECT_NEAR(penalty_d1(spec, z), d1, 1e-7) << to_string(kind) << " z=" << z;
      EXPECT_NEAR(penalty_d2(spec, z), d2, 1e-7) << to_string(kind) << " z=" << z;
    }
  }
}

TEST(Penalty, InnerBranchAtKink) {
  EXPECT_EQ(penalty_d2({Penalty::Huber, 1.0}, 1.0), 1.0);
  EXPECT_EQ(penalty_d2({Penalty::TruncatedQuadratic, 1.0}, -1.0), 1.0);
}

TEST(Penalty, NamesAndValidation) {
  Penalty k;
  EXPECT_TRUE(parse_penalty("pseudo-huber", k));
  EXPECT_EQ(k, Penalty::PseudoHuber);
  EXPECT_TRUE(parse_penalty("trunc-quad", k));
  EXPECT_EQ(k, Penalty::TruncatedQuadratic);
  EXPECT_TRUE(parse_penalty("welsch", k));
  EXPECT_FALSE(parse_penalty("cauchy", k));
  EXPECT_THROW(validate(PenaltySpec{Penalty::Huber, 0.0}), NodeError);
  EXPECT_THROW(validate(PenaltySpec{Penalty::Huber, std::nan("")}), NodeError);
}

TEST(Pool, QuadraticIsMean) {
  const Vector x = (Vector(3) << 1.0, 2.0, 3.0).finished();
  EXPECT_DOUBLE_EQ(robust_pool(x, {Penalty::Quadratic, 1.0}).y[0], 2.0);
}

TEST(Pool, UnanimousInput) {
  const Vector x = Vector::Constant(6, -1.75);
  for (Penalty kind : kAll) {
    EXPECT_NEAR(robust_pool(x, {kind, 0.7}).y[0], -1.75, 1e-12) << to_string(kind);
  }
}

TEST(Pool, WelschRejectsOutlier) {
  Vector x = Vector::Zero(11);
  x[10] = 100.0;
  const PenaltySpec spec{Penalty::Welsch, 1.0};
  const double y = robust_pool(x, spec).y[0];
  const double oracle = grid_search_pool(x, spec, -1.0, 101.0, 1e-4);
  EXPECT_LE(std::abs(y), 1e-3);
  EXPECT_NEAR(y, oracle, 1e-6);
  EXPECT_NEAR(robust_pool(x, {Penalty::Quadratic, 1.0}).y[0], 100.0 / 11.0, 1e-12);
}

TEST(Pool, NonConvexPenaltiesMatchGridSearch) {
  std::mt19937_64 rng(40);
  for (Penalty kind : {Penalty::Welsch, Penalty::TruncatedQuadratic}) {
    for (int t = 0; t < 5; ++t) {
      Vector x = test::random_vector(rng, 12, -0.3, 0.3);
      x.tail(3) = test::random_vector(rng, 3, 2.0, 4.0);
      const PenaltySpec spec{kind, 0.5};
      const Solution s = robust_pool(x, spec);
      const double oracle = grid_search_pool(x, spec, -1.0, 5.0, 1e-3);
      EXPECT_LE(pooling_objective(x, spec, s.y[0]), pooling_objective(x, spec, oracle) + 1e-9)
          << to_string(kind);
    }
  }
}

TEST(Pool, ShiftEquivariance) {
  std::mt19937_64 rng(41);
  for (Penalty kind : kAll) {
    for (int t = 0; t < 10; ++t) {
      const Vector x = test::random_vector(rng, 7, -2.0, 2.0);
      const double c = test::random_vector(rng, 1, -5.0, 5.0)[0];
      const PenaltySpec spec{kind, 0.8};
      const double a = robust_pool(x, spec).y[0];
      const double b = robust_pool((x.array() + c).matrix(), spec).y[0];
      EXPECT_NEAR(b, a + c, 1e-8) << to_string(kind);
    }
  }
}

TEST(Gradient, QuadraticIsUniform) {
  const Vector x = (Vector(4) << 1.0, -3.0, 0.5, 8.0).finished();
  const Jacobian J = robust_pool_gradient(x, {Penalty::Quadratic, 1.0}, x.mean());
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(J.matrix(0, i), 0.25);
}

TEST(Gradient, HuberAveragesInliers) {
  const Vector x = (Vector(5) << 0.0, 0.4, -0.3, 5.0, -6.0).finished();
  const PenaltySpec spec{Penalty::Huber, 1.0};
  const double y = robust_pool(x, spec).y[0];
  const Jacobian J = robust_pool_gradient(x, spec, y);
  int k = 0;
  for (Index i = 0; i < 5; ++i) k += std::abs(y - x[i]) <= 1.0 ? 1 : 0;
  ASSERT_EQ(k, 3);
  for (Index i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(J.matrix(0, i), std::abs(y - x[i]) <= 1.0 ? 1.0 / 3.0 : 0.0);
  }
}

TEST(Gradient, PseudoHuberMatchesOracle) {
  std::mt19937_64 rng(42);
  const PenaltySpec spec{Penalty::PseudoHuber, 1.0};
  for (int t = 0; t < 10; ++t) {
    const Vector x = test::random_vector(rng, 6, -3.0, 3.0);
    const Jacobian J = robust_pool_gradient(x, spec, robust_pool(x, spec).y[0]);
    const Matrix fd = fd_jacobian([&](const Vector& v) { return robust_pool(v, spec).y; }, x);
    EXPECT_LE(max_abs(J.matrix - fd), 1e-6);
  }
}

TEST(Gradient, RowsSumToOne) {
  std::mt19937_64 rng(43);
  for (Penalty kind : kAll) {
    for (int t = 0; t < 10; ++t) {
      const Vector x = test::random_vector(rng, 8, -1.0, 1.0);
      const PenaltySpec spec{kind, 0.6};
      const double y = robust_pool(x, spec).y[0];
      try {
        EXPECT_NEAR(robust_pool_gradient(x, spec, y).matrix.sum(), 1.0, 1e-12);
      } catch (const NodeError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UndefinedGradient);
      }
    }
  }
}

TEST(Gradient, LargeAlphaLimit) {
  std::mt19937_64 rng(44);
  const Vector x = test::random_vector(rng, 9, -4.0, 4.0);
  for (Penalty kind : kAll) {
    const PenaltySpec spec{kind, 1e6};
    const double y = robust_pool(x, spec).y[0];
    EXPECT_NEAR(y, x.mean(), 1e-6) << to_string(kind);
    const Jacobian J = robust_pool_gradient(x, spec, y);
    EXPECT_LE(max_abs(J.matrix - Matrix::Constant(1, 9, 1.0 / 9.0)), 1e-6) << to_string(kind);
  }
}

TEST(Gradient, HuberEqualsTruncatedQuadratic) {
  std::mt19937_64 rng(45);
  for (int t = 0; t < 20; ++t) {
    const Vector x = test::random_vector(rng, 10, -2.0, 2.0);
    const double y = test::random_vector(rng, 1, -1.0, 1.0)[0];
    const Jacobian a = robust_pool_gradient(x, {Penalty::Huber, 0.9}, y);
    const Jacobian b = robust_pool_gradient(x, {Penalty::TruncatedQuadratic, 0.9}, y);
    EXPECT_EQ(a.matrix, b.matrix);
  }
}

TEST(Gradient, GenericEngineAgreesWithClosedForm) {
  std::mt19937_64 rng(46);
  for (Penalty kind : kSmooth) {
    for (int t = 0; t < 20; ++t) {
      const Vector x = test::random_vector(rng, 5, -1.5, 1.5);
      const PenaltySpec spec{kind, 1.0};
      const double y = robust_pool(x, spec).y[0];
      const Vector yv = Vector::Constant(1, y);
      const Jacobian closed = robust_pool_gradient(x, spec, y);
      const Jacobian generic =
          gradient_unconstrained(pooling_problem(5, spec, PoolingDerivatives::Gradient), x, yv);
      EXPECT_LE(max_abs(closed.matrix - generic.matrix), 1e-6) << to_string(kind);
      const Jacobian values_only =
          gradient_unconstrained(pooling_problem(5, spec, PoolingDerivatives::None), x, yv);
      EXPECT_LE(max_abs(closed.matrix - values_only.matrix), 1e-5) << to_string(kind);
    }
  }
}

TEST(Gradient, AllOutlierHuberIsUndefined) {
  const Vector x = (Vector(2) << 0.0, 10.0).finished();
  const PenaltySpec spec{Penalty::Huber, 1.0};
  const Solution s = robust_pool(x, spec);
  EXPECT_GE(s.y[0], 1.0 - 1e-9);
  EXPECT_LE(s.y[0], 9.0 + 1e-9);
  if (s.y[0] > 1.0 + 1e-6 && s.y[0] < 9.0 - 1e-6) {
    try {
      robust_pool_gradient(x, spec, s.y[0]);
      FAIL() << "expected UndefinedGradient";
    } catch (const NodeError& e) {
      EXPECT_EQ(e.kind(), ErrorKind::UndefinedGradient);
    }
  }
  EXPECT_THROW(robust_pool_gradient(x, spec, 5.0), NodeError);
}

TEST(Gradient, TruncatedQuadraticKinkIsOneSided) {
  const Vector x = (Vector(2) << 0.0, 2.0).finished();
  const Jacobian J = robust_pool_gradient(x, {Penalty::TruncatedQuadratic, 1.0}, 1.0);
  EXPECT_TRUE(J.one_sided);
  EXPECT_DOUBLE_EQ(J.matrix(0, 0), 0.5);
  const Jacobian K = robust_pool_gradient(x, {Penalty::TruncatedQuadratic, 1.5}, 1.0);
  EXPECT_FALSE(K.one_sided);
}

TEST(Gradient, WelschScalesLargeExponents) {
  // Every weight underflows without the max-exponent shift.
  Vector x = Vector::Constant(3, 100.0);
  x[2] = 100.5;
  const PenaltySpec spec{Penalty::Welsch, 1.0};
  const double y = 50.0;
  const Jacobian J = robust_pool_gradient(x, spec, y);
  EXPECT_TRUE(J.matrix.allFinite());
  EXPECT_NEAR(J.matrix.sum(), 1.0, 1e-12);
}

}  // namespace
}  // namespace ddn
