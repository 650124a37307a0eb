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

#include <cmath>
#include <vector>

namespace ddn {

namespace {

double log_cosh(double z) {
  const double a = std::abs(z);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

Matrix normal_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) M(i, j) = scale * normal(rng);
  }
  return M;
}

MatrixListFn zero_blocks(Index count, bool square) {
  return [count, square](const Vector& x, const Vector& u) {
    return std::vector<Matrix>(static_cast<std::size_t>(count),
                               Matrix::Zero(u.size(), square ? u.size() : x.size()));
  };
}

void attach_objective(DeclarativeProblem& p, const SmoothObjective& obj, DerivativeLevel level) {
  p.objective = [obj](const Vector& x, const Vector& u) { return obj.value(x, u); };
  if (level == DerivativeLevel::ValuesOnly) return;
  p.derivatives.f_y = [obj](const Vector& x, const Vector& u) { return obj.grad_u(x, u); };
  if (level != DerivativeLevel::Full) return;
  p.derivatives.f_yy = [obj](const Vector& x, const Vector& u) { return obj.hess_uu(x, u); };
  p.derivatives.f_xy = [obj](const Vector& x, const Vector& u) { return obj.hess_xu(x, u); };
}

}  // namespace

double SmoothObjective::value(const Vector& x, const Vector& u) const {
  const Vector z = u - R * x;
  double f = 0.5 * u.dot(Q * u) - u.dot(P * x);
  const Index n = x.size();
  for (Index i = 0; i < u.size(); ++i) {
    f += w[i] * log_cosh(z[i]);
    f += 0.1 * std::sin(x[i % n]) * u[i] * u[i];
  }
  return f;
}

Vector SmoothObjective::grad_u(const Vector& x, const Vector& u) const {
  const Vector z = u - R * x;
  Vector g = Q * u - P * x;
  const Index n = x.size();
  for (Index i = 0; i < u.size(); ++i) {
    g[i] += w[i] * std::tanh(z[i]) + 0.2 * std::sin(x[i % n]) * u[i];
  }
  return g;
}

Matrix SmoothObjective::hess_uu(const Vector& x, const Vector& u) const {
  const Vector z = u - R * x;
  Matrix H = Q;
  const Index n = x.size();
  for (Index i = 0; i < u.size(); ++i) {
    const double t = std::tanh(z[i]);
    H(i, i) += w[i] * (1.0 - t * t) + 0.2 * std::sin(x[i % n]);
  }
  return H;
}

Matrix SmoothObjective::hess_xu(const Vector& x, const Vector& u) const {
  const Vector z = u - R * x;
  Matrix B = -P;
  const Index n = x.size();
  for (Index i = 0; i < u.size(); ++i) {
    const double t = std::tanh(z[i]);
    B.row(i) -= w[i] * (1.0 - t * t) * R.row(i);
    B(i, i % n) += 0.2 * std::cos(x[i % n]) * u[i];
  }
  return B;
}

SmoothObjective random_smooth_objective(std::mt19937_64& rng, Index m, Index n) {
  SmoothObjective obj;
  const Matrix G = normal_matrix(rng, m, m, 1.0);
  obj.Q = G.transpose() * G / static_cast<double>(m) + 0.5 * Matrix::Identity(m, m);
  obj.P = normal_matrix(rng, m, n, 0.5);
  obj.R = normal_matrix(rng, m, n, 0.5);
  std::uniform_real_distribution<double> weight(0.2, 1.0);
  obj.w.resize(m);
  for (Index i = 0; i < m; ++i) obj.w[i] = weight(rng);
  return obj;
}

DeclarativeProblem smooth_problem(const SmoothObjective& obj, DerivativeLevel level) {
  DeclarativeProblem p;
  p.input_dim = obj.input_dim();
  p.output_dim = obj.output_dim();
  attach_objective(p, obj, level);
  return p;
}

LinearConstraints random_linear_constraints(std::mt19937_64& rng, Index p, Index m, Index n,
                                            bool depend_on_x) {
  LinearConstraints c;
  c.A = normal_matrix(rng, p, m, 1.0);
  c.E = depend_on_x ? normal_matrix(rng, p, n, 0.5) : Matrix::Zero(p, n);
  c.d = normal_matrix(rng, p, 1, 0.5);
  return c;
}

DeclarativeProblem linear_equality_problem(const SmoothObjective& obj, const LinearConstraints& c,
                                           DerivativeLevel level) {
  DeclarativeProblem p = smooth_problem(obj, level);
  p.num_eq = c.A.rows();
  p.eq_constraints = [c](const Vector& x, const Vector& u) {
    return Vector(c.A * u - c.E * x - c.d);
  };
  if (level == DerivativeLevel::ValuesOnly) return p;
  p.derivatives.h_y = [c](const Vector&, const Vector&) { return c.A; };
  p.derivatives.h_x = [c](const Vector&, const Vector&) { return Matrix(-c.E); };
  if (level != DerivativeLevel::Full) return p;
  p.derivatives.h_yy = zero_blocks(c.A.rows(), true);
  p.derivatives.h_xy = zero_blocks(c.A.rows(), false);
  return p;
}

DeclarativeProblem sphere_equality_problem(const SmoothObjective& obj, const Vector& a,
                                           bool depend_on_x, DerivativeLevel level) {
  DeclarativeProblem p = smooth_problem(obj, level);
  p.num_eq = 1;
  const double k = depend_on_x ? 0.1 : 0.0;
  p.eq_constraints = [a, k](const Vector& x, const Vector& u) {
    const double s = a.dot(x);
    return Vector::Constant(1, u.squaredNorm() - 1.0 - k * s * s);
  };
  if (level == DerivativeLevel::ValuesOnly) return p;
  p.derivatives.h_y = [](const Vector&, const Vector& u) { return Matrix(2.0 * u.transpose()); };
  p.derivatives.h_x = [a, k](const Vector& x, const Vector&) {
    return Matrix(-2.0 * k * a.dot(x) * a.transpose());
  };
  if (level != DerivativeLevel::Full) return p;
  p.derivatives.h_yy = [](const Vector&, const Vector& u) {
    return std::vector<Matrix>{2.0 * Matrix::Identity(u.size(), u.size())};
  };
  p.derivatives.h_xy = zero_blocks(1, false);
  return p;
}

DeclarativeProblem linear_inequality_problem(const SmoothObjective& obj, const Matrix& G,
                                             const Matrix& E, const Vector& e) {
  DeclarativeProblem p = smooth_problem(obj, DerivativeLevel::Full);
  p.num_ineq = G.rows();
  p.ineq_constraints = [G, E, e](const Vector& x, const Vector& u) {
    return Vector(G * u - E * x - e);
  };
  p.derivatives.g_y = [G](const Vector&, const Vector&) { return G; };
  p.derivatives.g_x = [E](const Vector&, const Vector&) { return Matrix(-E); };
  p.derivatives.g_yy = zero_blocks(G.rows(), true);
  p.derivatives.g_xy = zero_blocks(G.rows(), false);
  return p;
}

DeclarativeProblem feasibility_problem(const Matrix& M, const Vector& c) {
  DeclarativeProblem p;
  const Index m = M.rows();
  p.input_dim = M.cols();
  p.output_dim = m;
  p.num_eq = m;
  p.objective = [](const Vector&, const Vector& u) { return 0.5 * u.squaredNorm(); };
  p.eq_constraints = [M, c](const Vector& x, const Vector& u) {
    return Vector(u + 0.1 * u.array().cube().matrix() - M * x - c);
  };
  p.derivatives.f_y = [](const Vector&, const Vector& u) { return u; };
  p.derivatives.f_yy = [](const Vector&, const Vector& u) {
    return Matrix(Matrix::Identity(u.size(), u.size()));
  };
  p.derivatives.f_xy = [](const Vector& x, const Vector& u) {
    return Matrix(Matrix::Zero(u.size(), x.size()));
  };
  p.derivatives.h_y = [](const Vector&, const Vector& u) {
    return Matrix((1.0 + 0.3 * u.array().square()).matrix().asDiagonal());
  };
  p.derivatives.h_x = [M](const Vector&, const Vector&) { return Matrix(-M); };
  p.derivatives.h_yy = [](const Vector&, const Vector& u) {
    std::vector<Matrix> blocks;
    for (Index i = 0; i < u.size(); ++i) {
      Matrix H = Matrix::Zero(u.size(), u.size());
      H(i, i) = 0.6 * u[i];
      blocks.push_back(H);
    }
    return blocks;
  };
  p.derivatives.h_xy = zero_blocks(m, false);
  return p;
}

DeclarativeProblem pathological_problem() {
  DeclarativeProblem p;
  p.input_dim = 1;
  p.output_dim = 1;
  p.num_eq = 1;
  p.objective = [](const Vector&, const Vector&) { return 0.0; };
  p.eq_constraints = [](const Vector& x, const Vector& u) {
    return Vector::Constant(1, (u[0] - 1.0) * (u[0] - 1.0) - x[0] * x[0]);
  };
  p.derivatives.f_y = [](const Vector&, const Vector&) { return Vector(Vector::Zero(1)); };
  p.derivatives.f_yy = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); };
  p.derivatives.f_xy = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); };
  p.derivatives.h_y = [](const Vector&, const Vector& u) {
    return Matrix(Matrix::Constant(1, 1, 2.0 * (u[0] - 1.0)));
  };
  p.derivatives.h_x = [](const Vector& x, const Vector&) {
    return Matrix(Matrix::Constant(1, 1, -2.0 * x[0]));
  };
  p.derivatives.h_yy = [](const Vector&, const Vector&) {
    return std::vector<Matrix>{Matrix::Constant(1, 1, 2.0)};
  };
  p.derivatives.h_xy = [](const Vector&, const Vector&) {
    return std::vector<Matrix>{Matrix::Zero(1, 1)};
  };
  return p;
}

DeclarativeProblem alignment_problem(Index n) {
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  p.objective = [](const Vector& x, const Vector& u) { return -x.dot(u) / u.norm(); };
  p.derivatives.f_y = [](const Vector& x, const Vector& u) {
    const double s = u.norm();
    return Vector(-x / s + x.dot(u) * u / (s * s * s));
  };
  p.derivatives.f_yy = [](const Vector& x, const Vector& u) {
    const double s = u.norm();
    const double a = x.dot(u);
    const Index m = u.size();
    const Matrix sym = x * u.transpose() + u * x.transpose() + a * Matrix::Identity(m, m);
    return Matrix(sym / (s * s * s) - 3.0 * a * u * u.transpose() / std::pow(s, 5));
  };
  p.derivatives.f_xy = [](const Vector& x, const Vector& u) {
    const double s = u.norm();
    return Matrix(-Matrix::Identity(u.size(), x.size()) / s + u * u.transpose() / (s * s * s));
  };
  return p;
}

DeclarativeProblem normalized_alignment_problem(Index n) {
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  p.num_eq = 1;
  p.objective = [](const Vector& x, const Vector& u) { return -x.dot(u); };
  p.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector::Constant(1, u.squaredNorm() - 1.0);
  };
  p.derivatives.f_y = [](const Vector& x, const Vector&) { return Vector(-x); };
  p.derivatives.f_yy = [](const Vector&, const Vector& u) {
    return Matrix(Matrix::Zero(u.size(), u.size()));
  };
  p.derivatives.f_xy = [](const Vector& x, const Vector& u) {
    return Matrix(-Matrix::Identity(u.size(), x.size()));
  };
  p.derivatives.h_y = [](const Vector&, const Vector& u) { return Matrix(2.0 * u.transpose()); };
  p.derivatives.h_x = [](const Vector& x, const Vector&) { return Matrix(Matrix::Zero(1, x.size())); };
  p.derivatives.h_yy = [](const Vector&, const Vector& u) {
    return std::vector<Matrix>{2.0 * Matrix::Identity(u.size(), u.size())};
  };
  p.derivatives.h_xy = zero_blocks(1, false);
  return p;
}

}  // namespace ddn
