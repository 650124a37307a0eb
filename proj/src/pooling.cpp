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

#include "ddn/pooling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace ddn {

namespace {

constexpr int kMaxIters = 200;
constexpr double kEps = std::numeric_limits<double>::epsilon();

double data_scale(const Vector& x) { return std::max(1.0, x.cwiseAbs().maxCoeff()); }

// f'(u) is compared against n * phi''(0), which turns the stationarity test
// into a step length in the units of u.
double curvature_scale(const Vector& x, const PenaltySpec& spec) {
  return static_cast<double>(x.size()) * penalty_d2(spec, 0.0);
}

struct Derivs {
  double g = 0.0;
  double h = 0.0;
};

Derivs pooled_derivs(const Vector& x, const PenaltySpec& spec, double u) {
  Derivs d;
  for (Index i = 0; i < x.size(); ++i) {
    d.g += penalty_d1(spec, u - x[i]);
    d.h += penalty_d2(spec, u - x[i]);
  }
  return d;
}

double median(const Vector& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct LocalResult {
  double u = 0.0;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
};

// A few Newton steps past the tolerance so that y is accurate to rounding.
double polish(const Vector& x, const PenaltySpec& spec, double u) {
  Derivs d = pooled_derivs(x, spec, u);
  for (int k = 0; k < 4 && d.g != 0.0 && d.h > 0.0; ++k) {
    const double cand = u - d.g / d.h;
    const Derivs dc = pooled_derivs(x, spec, cand);
    if (!(std::abs(dc.g) < std::abs(d.g))) break;
    u = cand;
    d = dc;
  }
  return u;
}

LocalResult convex_newton(const Vector& x, const PenaltySpec& spec, double tol) {
  LocalResult r;
  double lo = x.minCoeff();
  double hi = x.maxCoeff();
  double u = x.mean();
  for (int it = 0; it < kMaxIters; ++it) {
    r.iterations = it + 1;
    const Derivs d = pooled_derivs(x, spec, u);
    if (std::abs(d.g) <= tol) {
      r.u = polish(x, spec, u);
      r.converged = true;
      break;
    }
    if (d.g > 0.0) {
      hi = u;
    } else {
      lo = u;
    }
    if (hi - lo <= 4.0 * kEps * std::max({1.0, std::abs(lo), std::abs(hi)})) {
      r.u = 0.5 * (lo + hi);
      r.converged = true;
      break;
    }
    double cand = d.h > 0.0 ? u - d.g / d.h : std::numeric_limits<double>::quiet_NaN();
    if (!(cand > lo && cand < hi)) cand = 0.5 * (lo + hi);
    u = cand;
    r.u = u;
  }
  r.f = pooling_objective(x, spec, r.u);
  return r;
}

double golden_section(const Vector& x, const PenaltySpec& spec, double a, double b) {
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = pooling_objective(x, spec, c);
  double fd = pooling_objective(x, spec, d);
  for (int k = 0; k < 100 && std::abs(b - a) > 4.0 * kEps * std::max(1.0, std::abs(a)); ++k) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = pooling_objective(x, spec, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = pooling_objective(x, spec, d);
    }
  }
  return fc <= fd ? c : d;
}

LocalResult local_descent(const Vector& x, const PenaltySpec& spec, double u, double tol) {
  LocalResult r;
  double f = pooling_objective(x, spec, u);
  for (int it = 0; it < kMaxIters; ++it) {
    r.iterations = it + 1;
    const Derivs d = pooled_derivs(x, spec, u);
    if (std::abs(d.g) <= tol) {
      r.converged = true;
      break;
    }
    const double dir = d.h > 0.0 ? -d.g / d.h : -std::copysign(spec.alpha, d.g);
    const double slope = d.g * dir;
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      const double cand = u + t * dir;
      const double fc = pooling_objective(x, spec, cand);
      if (fc <= f + 1e-4 * t * slope) {
        u = cand;
        f = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      const double cand = golden_section(x, spec, std::min(u, u + dir), std::max(u, u + dir));
      const double fc = pooling_objective(x, spec, cand);
      if (!(fc < f)) break;
      u = cand;
      f = fc;
    }
  }
  if (!r.converged) r.converged = std::abs(pooled_derivs(x, spec, u).g) <= tol;
  if (r.converged) u = polish(x, spec, u);
  r.u = u;
  r.f = pooling_objective(x, spec, u);
  return r;
}

Solution pooled_solution(const Vector& x, const PenaltySpec& spec, double y, int iterations,
                         int restarts) {
  Solution s;
  s.y = Vector::Constant(1, y);
  s.multipliers = Vector::Zero(0);
  s.objective_value = pooling_objective(x, spec, y);
  s.solver_info = {iterations, true, restarts};
  return s;
}

}  // namespace

const char* to_string(Penalty kind) noexcept {
  switch (kind) {
    case Penalty::Quadratic: return "quadratic";
    case Penalty::PseudoHuber: return "pseudo-huber";
    case Penalty::Huber: return "huber";
    case Penalty::Welsch: return "welsch";
    case Penalty::TruncatedQuadratic: return "trunc-quad";
  }
  return "unknown";
}

bool parse_penalty(const std::string& name, Penalty& out) {
  std::string key;
  for (char c : name) {
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "quadratic" || key == "quad") {
    out = Penalty::Quadratic;
  } else if (key == "pseudohuber" || key == "pseudo") {
    out = Penalty::PseudoHuber;
  } else if (key == "huber") {
    out = Penalty::Huber;
  } else if (key == "welsch") {
    out = Penalty::Welsch;
  } else if (key == "truncquad" || key == "truncatedquadratic" || key == "trunc") {
    out = Penalty::TruncatedQuadratic;
  } else {
    return false;
  }
  return true;
}

void validate(const PenaltySpec& spec) {
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "penalty alpha must be positive and finite, got " + format_real(spec.alpha));
  }
}

double penalty_value(const PenaltySpec& spec, double z) {
  const double a = spec.alpha;
  switch (spec.kind) {
    case Penalty::Quadratic:
      return 0.5 * z * z;
    case Penalty::PseudoHuber: {
      // a^2 (sqrt(1 + (z/a)^2) - 1) without the cancellation
      const double r = z / a;
      return z * z / (std::sqrt(1.0 + r * r) + 1.0);
    }
    case Penalty::Huber:
      return std::abs(z) <= a ? 0.5 * z * z : a * (std::abs(z) - 0.5 * a);
    case Penalty::Welsch:
      return -std::expm1(-z * z / (2.0 * a * a));
    case Penalty::TruncatedQuadratic:
      return std::abs(z) <= a ? 0.5 * z * z : 0.5 * a * a;
  }
  return 0.0;
}

double penalty_d1(const PenaltySpec& spec, double z) {
  const double a = spec.alpha;
  switch (spec.kind) {
    case Penalty::Quadratic:
      return z;
    case Penalty::PseudoHuber: {
      const double r = z / a;
      return z / std::sqrt(1.0 + r * r);
    }
    case Penalty::Huber:
      return std::abs(z) <= a ? z : std::copysign(a, z);
    case Penalty::Welsch:
      return z / (a * a) * std::exp(-z * z / (2.0 * a * a));
    case Penalty::TruncatedQuadratic:
      return std::abs(z) <= a ? z : 0.0;
  }
  return 0.0;
}

double penalty_d2(const PenaltySpec& spec, double z) {
  const double a = spec.alpha;
  switch (spec.kind) {
    case Penalty::Quadratic:
      return 1.0;
    case Penalty::PseudoHuber: {
      const double r = z / a;
      return std::pow(1.0 + r * r, -1.5);
    }
    case Penalty::Huber:
    case Penalty::TruncatedQuadratic:
      return std::abs(z) <= a ? 1.0 : 0.0;
    case Penalty::Welsch: {
      const double a2 = a * a;
      return (1.0 - z * z / a2) / a2 * std::exp(-z * z / (2.0 * a2));
    }
  }
  return 0.0;
}

double pooling_objective(const Vector& x, const PenaltySpec& spec, double u) {
  double f = 0.0;
  for (Index i = 0; i < x.size(); ++i) f += penalty_value(spec, u - x[i]);
  return f;
}

Solution robust_pool(const Vector& x, const PenaltySpec& spec) {
  validate(spec);
  if (x.size() < 1) {
    throw NodeError(ErrorKind::DimensionMismatch, "robust_pool needs at least one value, got 0");
  }
  if (!x.allFinite()) {
    throw NodeError(ErrorKind::DimensionMismatch, "robust_pool input contains non-finite values");
  }
  const double tol = kStationarityTol * curvature_scale(x, spec) * data_scale(x);

  switch (spec.kind) {
    case Penalty::Quadratic:
      return pooled_solution(x, spec, x.mean(), 0, 0);
    case Penalty::PseudoHuber:
    case Penalty::Huber: {
      const LocalResult r = convex_newton(x, spec, tol);
      if (!r.converged) {
        throw NodeError(ErrorKind::SolverDiverged,
                        std::string(to_string(spec.kind)) + " pooling of n=" +
                            std::to_string(x.size()) + " values not stationary after " +
                            std::to_string(kMaxIters) + " iterations");
      }
      return pooled_solution(x, spec, r.u, r.iterations, 0);
    }
    case Penalty::Welsch:
    case Penalty::TruncatedQuadratic: {
      std::vector<double> starts{x.mean()};
      const double med = median(x);
      if (med != starts.front()) starts.push_back(med);
      bool have = false;
      LocalResult best;
      int iterations = 0;
      for (double s : starts) {
        const LocalResult r = local_descent(x, spec, s, tol);
        iterations += r.iterations;
        if (!r.converged) continue;
        if (!have || r.f < best.f - 1e-12 || (std::abs(r.f - best.f) <= 1e-12 && r.u < best.u)) {
          best = r;
          have = true;
        }
      }
      if (!have) {
        throw NodeError(ErrorKind::SolverDiverged,
                        std::string(to_string(spec.kind)) + " pooling of n=" +
                            std::to_string(x.size()) + " values: no start became stationary within " +
                            std::to_string(kMaxIters) + " iterations");
      }
      return pooled_solution(x, spec, best.u, iterations, static_cast<int>(starts.size()) - 1);
    }
  }
  return {};
}

Jacobian robust_pool_gradient(const Vector& x, const PenaltySpec& spec, double y) {
  validate(spec);
  const Index n = x.size();
  Jacobian J;
  J.matrix = Matrix::Zero(1, n);
  Vector w(n);
  switch (spec.kind) {
    case Penalty::Quadratic:
      J.matrix.setConstant(1.0 / static_cast<double>(n));
      return J;
    case Penalty::PseudoHuber:
      for (Index i = 0; i < n; ++i) w[i] = penalty_d2(spec, y - x[i]);
      break;
    case Penalty::Huber:
    case Penalty::TruncatedQuadratic: {
      const double kink_tol = 1e-12 * std::max(1.0, spec.alpha);
      for (Index i = 0; i < n; ++i) {
        const double z = std::abs(y - x[i]);
        w[i] = z <= spec.alpha ? 1.0 : 0.0;
        if (std::abs(z - spec.alpha) <= kink_tol) J.one_sided = true;
      }
      break;
    }
    case Penalty::Welsch: {
      const double a2 = spec.alpha * spec.alpha;
      Vector expo(n);
      for (Index i = 0; i < n; ++i) expo[i] = -(y - x[i]) * (y - x[i]) / (2.0 * a2);
      const double top = expo.maxCoeff();
      for (Index i = 0; i < n; ++i) {
        const double z = y - x[i];
        w[i] = (a2 - z * z) * std::exp(expo[i] - top);
      }
      break;
    }
  }
  const double total = w.sum();
  const double mass = w.cwiseAbs().sum();
  if (!(std::abs(total) > 1e-14 * mass) || !std::isfinite(total)) {
    throw NodeError(ErrorKind::UndefinedGradient,
                    std::string(to_string(spec.kind)) + " pooling at y=" + format_real(y) +
                        ": D_YY f is zero (weight sum " + format_real(total) + " over n=" +
                        std::to_string(n) + ")");
  }
  J.matrix.row(0) = (w / total).transpose();
  return J;
}

DeclarativeProblem pooling_problem(Index n, const PenaltySpec& spec, PoolingDerivatives level) {
  validate(spec);
  DeclarativeProblem p;
  p.input_dim = n;
  p.output_dim = 1;
  p.objective = [spec](const Vector& x, const Vector& u) {
    return pooling_objective(x, spec, u[0]);
  };
  if (level != PoolingDerivatives::None) {
    p.derivatives.f_y = [spec](const Vector& x, const Vector& u) {
      double g = 0.0;
      for (Index i = 0; i < x.size(); ++i) g += penalty_d1(spec, u[0] - x[i]);
      return Vector::Constant(1, g);
    };
  }
  if (level == PoolingDerivatives::Full) {
    p.derivatives.f_yy = [spec](const Vector& x, const Vector& u) {
      double h = 0.0;
      for (Index i = 0; i < x.size(); ++i) h += penalty_d2(spec, u[0] - x[i]);
      return Matrix::Constant(1, 1, h);
    };
    p.derivatives.f_xy = [spec](const Vector& x, const Vector& u) {
      Matrix b(1, x.size());
      for (Index i = 0; i < x.size(); ++i) b(0, i) = -penalty_d2(spec, u[0] - x[i]);
      return b;
    };
  }
  return p;
}

}  // namespace ddn
