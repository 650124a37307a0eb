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

#include "ddn/projection.hpp"

#include "ddn/implicit_diff.hpp"
#include "ddn/solve.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace ddn {

namespace {

constexpr double kBoundaryTol = 1e-9;  // relative to the radius
constexpr double kTieTol = 1e-9;

std::string lower_key(const std::string& s) {
  std::string key;
  for (char c : s) {
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return key;
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Projection of a nonnegative vector onto {w >= 0, sum w = r}.
Vector simplex_projection(const Vector& v, double r) {
  std::vector<double> mu(v.data(), v.data() + v.size());
  std::sort(mu.begin(), mu.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    cumulative += mu[j];
    const double t = (cumulative - r) / static_cast<double>(j + 1);
    if (mu[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

Vector sphere_projection(const Vector& x, Norm norm, double r) {
  const Index n = x.size();
  switch (norm) {
    case Norm::L2: {
      const double nx = x.norm();
      if (nx == 0.0) {
        throw NodeError(ErrorKind::InfeasibleProblem,
                        "L2 sphere projection of the zero vector (n=" + std::to_string(n) +
                            ") is non-isolated: every point of the sphere is optimal");
      }
      return (r / nx) * x;
    }
    case Norm::L1: {
      const Vector w = simplex_projection(x.cwiseAbs(), r);
      Vector y(n);
      for (Index i = 0; i < n; ++i) y[i] = (x[i] < 0.0 ? -1.0 : 1.0) * w[i];
      return y;
    }
    case Norm::Linf: {
      Vector y = x.cwiseMax(-r).cwiseMin(r);
      const double top = x.cwiseAbs().maxCoeff();
      if (top < r) {
        for (Index i = 0; i < n; ++i) {
          if (std::abs(x[i]) == top) y[i] = x[i] < 0.0 ? -r : r;
        }
      }
      return y;
    }
  }
  return x;
}

Matrix sphere_gradient(const Vector& x, const ProjectionSpec& spec, const Vector& y) {
  const Index n = x.size();
  const Matrix I = Matrix::Identity(n, n);
  if (spec.norm == Norm::L2) {
    const double nx = x.norm();
    if (nx == 0.0) {
      throw NodeError(ErrorKind::UndefinedGradient,
                      "L2 sphere projection gradient at x = 0 (n=" + std::to_string(n) + ")");
    }
    const Vector yh = y / y.norm();
    return (spec.radius / nx) * (I - yh * yh.transpose());
  }
  const Vector a = constraint_normal(y, spec.norm);
  const double aa = a.squaredNorm();
  if (!spec.masked_gradient) return I - a * a.transpose() / aa;
  const Vector mask = a.cwiseAbs();
  if (spec.norm == Norm::L1) {
    Matrix D = -a * a.transpose() / aa;
    D.diagonal() += mask;
    return D;
  }
  Matrix D = I;
  D.diagonal() -= mask;
  return D;
}

}  // namespace

const char* to_string(Norm norm) noexcept {
  switch (norm) {
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::Linf: return "linf";
  }
  return "unknown";
}

const char* to_string(Surface surface) noexcept {
  return surface == Surface::Sphere ? "sphere" : "ball";
}

bool parse_norm(const std::string& name, Norm& out) {
  const std::string key = lower_key(name);
  if (key == "l1" || key == "1") {
    out = Norm::L1;
  } else if (key == "l2" || key == "2") {
    out = Norm::L2;
  } else if (key == "linf" || key == "inf" || key == "max") {
    out = Norm::Linf;
  } else {
    return false;
  }
  return true;
}

bool parse_surface(const std::string& name, Surface& out) {
  const std::string key = lower_key(name);
  if (key == "sphere") {
    out = Surface::Sphere;
  } else if (key == "ball") {
    out = Surface::Ball;
  } else {
    return false;
  }
  return true;
}

void validate(const ProjectionSpec& spec) {
  if (!(spec.radius > 0.0) || !std::isfinite(spec.radius)) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "projection radius must be positive and finite, got " +
                        format_real(spec.radius));
  }
}

double lp_norm(const Vector& v, Norm norm) {
  if (v.size() == 0) return 0.0;
  switch (norm) {
    case Norm::L1: return v.lpNorm<1>();
    case Norm::L2: return v.norm();
    case Norm::Linf: return v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

Vector constraint_normal(const Vector& y, Norm norm) {
  const Index n = y.size();
  switch (norm) {
    case Norm::L2: {
      const double ny = y.norm();
      return ny > 0.0 ? Vector(y / ny) : Vector::Zero(n);
    }
    case Norm::L1: {
      Vector a(n);
      for (Index i = 0; i < n; ++i) a[i] = sign_of(y[i]);
      return a;
    }
    case Norm::Linf: {
      Vector a = Vector::Zero(n);
      if (n == 0) return a;
      const double top = y.cwiseAbs().maxCoeff();
      for (Index i = 0; i < n; ++i) {
        if (std::abs(y[i]) >= top - kTieTol) a[i] = sign_of(y[i]);
      }
      return a;
    }
  }
  return Vector::Zero(n);
}

Solution project(const Vector& x, const ProjectionSpec& spec) {
  validate(spec);
  if (x.size() < 1) {
    throw NodeError(ErrorKind::DimensionMismatch, "projection needs n >= 1, got 0");
  }
  const double r = spec.radius;
  Solution s;
  s.multipliers = Vector::Zero(1);
  if (spec.surface == Surface::Ball) {
    const double nx = lp_norm(x, spec.norm);
    s.active_set = {std::abs(nx - r) <= kBoundaryTol * r || nx > r};
    if (nx <= r) {
      s.y = x;
      s.objective_value = 0.0;
      s.solver_info = {0, true, 0};
      return s;
    }
  }
  s.y = sphere_projection(x, spec.norm, r);
  const Vector a = constraint_normal(s.y, spec.norm);
  const double aa = a.squaredNorm();
  s.multipliers[0] = aa > 0.0 ? a.dot(s.y - x) / aa : 0.0;
  s.objective_value = 0.5 * (s.y - x).squaredNorm();
  s.solver_info = {1, true, 0};
  return s;
}

Jacobian project_gradient(const Vector& x, const ProjectionSpec& spec, const Vector& y) {
  validate(spec);
  if (x.size() != y.size()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "project_gradient with x:" + std::to_string(x.size()) +
                        " and y:" + std::to_string(y.size()));
  }
  const Index n = x.size();
  Jacobian J;
  if (spec.surface == Surface::Ball) {
    const double nx = lp_norm(x, spec.norm);
    const double tol = kBoundaryTol * spec.radius;
    if (nx < spec.radius - tol) {
      J.matrix = Matrix::Zero(n, n);
      return J;
    }
    J.one_sided = std::abs(nx - spec.radius) <= tol;
  }
  J.matrix = sphere_gradient(x, spec, y);
  return J;
}

DeclarativeProblem projection_problem(Index n, const ProjectionSpec& spec) {
  validate(spec);
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  p.objective = [](const Vector& x, const Vector& u) { return 0.5 * (u - x).squaredNorm(); };
  const Norm norm = spec.norm;
  const double r = spec.radius;
  VectorFn h = [norm, r](const Vector&, const Vector& u) {
    return Vector::Constant(1, lp_norm(u, norm) - r);
  };
  MatrixFn h_y = [norm](const Vector&, const Vector& u) {
    return Matrix(constraint_normal(u, norm).transpose());
  };
  MatrixFn h_x = [](const Vector& x, const Vector&) { return Matrix::Zero(1, x.size()); };
  MatrixListFn h_yy = [norm](const Vector&, const Vector& u) {
    const Index m = u.size();
    Matrix H = Matrix::Zero(m, m);
    if (norm == Norm::L2) {
      const double nu = u.norm();
      if (nu > 0.0) {
        const Vector uh = u / nu;
        H = (Matrix::Identity(m, m) - uh * uh.transpose()) / nu;
      }
    }
    return std::vector<Matrix>{H};
  };
  MatrixListFn h_xy = [](const Vector& x, const Vector& u) {
    return std::vector<Matrix>{Matrix::Zero(u.size(), x.size())};
  };

  p.derivatives.f_y = [](const Vector& x, const Vector& u) { return Vector(u - x); };
  p.derivatives.f_yy = [](const Vector&, const Vector& u) {
    return Matrix(Matrix::Identity(u.size(), u.size()));
  };
  p.derivatives.f_xy = [](const Vector& x, const Vector& u) {
    return Matrix(-Matrix::Identity(u.size(), x.size()));
  };
  if (spec.surface == Surface::Sphere) {
    p.num_eq = 1;
    p.eq_constraints = h;
    p.derivatives.h_y = h_y;
    p.derivatives.h_x = h_x;
    p.derivatives.h_yy = h_yy;
    p.derivatives.h_xy = h_xy;
  } else {
    p.num_ineq = 1;
    p.ineq_constraints = h;
    p.derivatives.g_y = h_y;
    p.derivatives.g_x = h_x;
    p.derivatives.g_yy = h_yy;
    p.derivatives.g_xy = h_xy;
  }
  return p;
}

DeclarativeProblem relu_problem(Index n) {
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = n;
  p.num_ineq = n;
  p.objective = [](const Vector& x, const Vector& u) { return 0.5 * (u - x).squaredNorm(); };
  p.ineq_constraints = [](const Vector&, const Vector& u) { return Vector(-u); };
  p.derivatives.f_y = [](const Vector& x, const Vector& u) { return Vector(u - x); };
  p.derivatives.f_yy = [](const Vector&, const Vector& u) {
    return Matrix(Matrix::Identity(u.size(), u.size()));
  };
  p.derivatives.f_xy = [](const Vector& x, const Vector& u) {
    return Matrix(-Matrix::Identity(u.size(), x.size()));
  };
  p.derivatives.g_y = [](const Vector&, const Vector& u) {
    return Matrix(-Matrix::Identity(u.size(), u.size()));
  };
  p.derivatives.g_x = [](const Vector& x, const Vector& u) {
    return Matrix(Matrix::Zero(u.size(), x.size()));
  };
  p.derivatives.g_yy = [](const Vector&, const Vector& u) {
    return std::vector<Matrix>(static_cast<std::size_t>(u.size()), Matrix::Zero(u.size(), u.size()));
  };
  p.derivatives.g_xy = [](const Vector& x, const Vector& u) {
    return std::vector<Matrix>(static_cast<std::size_t>(u.size()), Matrix::Zero(u.size(), x.size()));
  };
  return p;
}

Solution declarative_relu(const Vector& x) {
  return solve_constrained(relu_problem(x.size()), x, x);
}

Jacobian declarative_relu_gradient(const Vector& x, const Solution& solution) {
  return gradient(relu_problem(x.size()), x, solution);
}

}  // namespace ddn
