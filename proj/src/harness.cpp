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

#include "ddn/harness.hpp"

#include "ddn/numdiff.hpp"
#include "ddn/problems.hpp"
#include "ddn/solve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace ddn {

namespace {

constexpr int kMaxResample = 50;

std::uint64_t stream_id(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Index uniform_index(std::mt19937_64& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vector normal_vector(std::mt19937_64& rng, Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * normal(rng);
  return v;
}

double random_sign(std::mt19937_64& rng) { return uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0; }

std::vector<double> to_list(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

TrialOutcome outcome(const Matrix& J, const Matrix& oracle, bool one_sided = false,
                     bool fallback = false) {
  TrialOutcome o;
  o.rel_err = relative_error(J, oracle);
  o.one_sided = one_sided;
  o.fallback = fallback;
  return o;
}

TrialOutcome from_context(const GradientContext& ctx, const Matrix& oracle) {
  const Jacobian J = ctx.jacobian();
  TrialOutcome o = outcome(J.matrix, oracle, J.one_sided, J.rank_deficient_fallback);
  o.paths.insert(ctx.path());
  return o;
}

// --- generic problem families ----------------------------------------------

TrialOutcome unconstrained_trial(std::mt19937_64& rng, DerivativeLevel level) {
  const Index m = uniform_index(rng, 1, 6);
  const Index n = uniform_index(rng, 1, 8);
  const SmoothObjective obj = random_smooth_objective(rng, m, n);
  const DeclarativeProblem P = smooth_problem(obj, level);
  // The oracle differentiates the exact solution map, so it solves with
  // closed-form gradients whatever level the backward pass sees.
  const DeclarativeProblem exact = smooth_problem(obj, DerivativeLevel::Full);
  const Vector x = normal_vector(rng, n);
  const Solution sol = solve_unconstrained(exact, x, Vector::Zero(m));
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_unconstrained(exact, xs, sol.y).y; }, x);
  return from_context(make_context(P, x, sol.y), oracle);
}

TrialOutcome alignment_trial(std::mt19937_64& rng) {
  const Index n = uniform_index(rng, 2, 6);
  const Vector x = normal_vector(rng, n);
  const DeclarativeProblem P = alignment_problem(n);
  const Vector y = x / x.norm();
  const Matrix oracle = fd_jacobian([](const Vector& xs) { return Vector(xs / xs.norm()); }, x);
  return from_context(make_context(P, x, y), oracle);
}

TrialOutcome normalized_alignment_trial(std::mt19937_64& rng) {
  const Index n = uniform_index(rng, 2, 6);
  const Vector x = normal_vector(rng, n);
  const DeclarativeProblem P = normalized_alignment_problem(n);
  const Solution sol = solve_equality(P, x, x / x.norm());
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_equality(P, xs, sol.y).y; }, x);
  return from_context(make_context(P, x, sol.y, sol.multipliers), oracle);
}

TrialOutcome linear_equality_trial(std::mt19937_64& rng) {
  const Index m = uniform_index(rng, 2, 6);
  const Index n = uniform_index(rng, 1, 8);
  const Index p = uniform_index(rng, 1, m - 1);
  const SmoothObjective obj = random_smooth_objective(rng, m, n);
  const LinearConstraints c = random_linear_constraints(rng, p, m, n, false);
  const DeclarativeProblem P = linear_equality_problem(obj, c);
  const Vector x = normal_vector(rng, n);
  const Solution sol = solve_equality(P, x, Vector::Zero(m));
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_equality(P, xs, sol.y).y; }, x);
  TrialOutcome o = outcome(gradient_linear_equality(P, x, sol.y, c.A).matrix, oracle);
  o.paths.insert(GradientPath::Constrained);
  return o;
}

Vector sphere_start(const DeclarativeProblem& P, const Vector& x, double radius) {
  DeclarativeProblem free = P;
  free.num_eq = 0;
  free.eq_constraints = nullptr;
  const Vector u = solve_unconstrained(free, x, Vector::Zero(P.output_dim)).y;
  const double nu = u.norm();
  Vector start = u;
  if (nu > 0.0) {
    start *= radius / nu;
  } else {
    start.setZero();
    start[0] = radius;
  }
  return start;
}

TrialOutcome sphere_equality_trial(std::mt19937_64& rng, bool depend_on_x) {
  const Index m = uniform_index(rng, 2, 6);
  const Index n = uniform_index(rng, 1, 8);
  const SmoothObjective obj = random_smooth_objective(rng, m, n);
  const Vector a = normal_vector(rng, n, 0.5);
  const DeclarativeProblem P = sphere_equality_problem(obj, a, depend_on_x);
  const Vector x = normal_vector(rng, n);
  const double s = a.dot(x);
  const double radius = std::sqrt(1.0 + (depend_on_x ? 0.1 * s * s : 0.0));
  const Solution sol = solve_equality(P, x, sphere_start(P, x, radius));
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_equality(P, xs, sol.y).y; }, x);
  if (!depend_on_x) {
    TrialOutcome o = outcome(gradient_single_constraint(P, x, sol.y).matrix, oracle);
    o.paths.insert(GradientPath::Constrained);
    return o;
  }
  return from_context(make_context(P, x, sol.y, sol.multipliers), oracle);
}

TrialOutcome rank_repair_trial(std::mt19937_64& rng) {
  const Index m = uniform_index(rng, 2, 6);
  const Index n = uniform_index(rng, 1, 8);
  const Index p = uniform_index(rng, 1, m - 1);
  const SmoothObjective obj = random_smooth_objective(rng, m, n);
  const LinearConstraints c = random_linear_constraints(rng, p, m, n, true);
  LinearConstraints dup = c;
  const Index src = uniform_index(rng, 0, p - 1);
  const double scale = uniform(rng, 0.5, 2.0);
  dup.A.conservativeResize(p + 1, Eigen::NoChange);
  dup.E.conservativeResize(p + 1, Eigen::NoChange);
  dup.d.conservativeResize(p + 1);
  dup.A.row(p) = scale * c.A.row(src);
  dup.E.row(p) = scale * c.E.row(src);
  dup.d[p] = scale * c.d[src];
  const DeclarativeProblem P = linear_equality_problem(obj, c);
  const DeclarativeProblem Pdup = linear_equality_problem(obj, dup);
  const Vector x = normal_vector(rng, n);
  const Solution sol = solve_equality(P, x, Vector::Zero(m));
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_equality(P, xs, sol.y).y; }, x);
  return from_context(make_context(Pdup, x, sol.y), oracle);
}

TrialOutcome inequality_trial(std::mt19937_64& rng) {
  for (int attempt = 0;; ++attempt) {
    const Index m = uniform_index(rng, 2, 6);
    const Index n = uniform_index(rng, 1, 8);
    const Index q = uniform_index(rng, 1, std::min<Index>(4, m));
    const SmoothObjective obj = random_smooth_objective(rng, m, n);
    const Vector x = normal_vector(rng, n);
    const Vector u0 = solve_unconstrained(smooth_problem(obj), x, Vector::Zero(m)).y;
    const Matrix G = normal_vector(rng, q * m).reshaped(q, m);
    const Matrix E = normal_vector(rng, q * n, 0.5).reshaped(q, n);
    Vector e = G * u0 - E * x;
    for (Index i = 0; i < q; ++i) e[i] += random_sign(rng) * uniform(rng, 0.2, 0.8);
    const DeclarativeProblem P = linear_inequality_problem(obj, G, E, e);
    Solution sol;
    try {
      sol = solve_constrained(P, x, u0);
    } catch (const NodeError&) {
      if (attempt < kMaxResample) continue;
      throw;
    }
    // Strict complementarity keeps the finite-difference stencil on one face.
    const Vector g = P.ineq_constraints(x, sol.y);
    bool degenerate = false;
    for (Index i = 0; i < q; ++i) {
      const bool active = sol.active_set[static_cast<std::size_t>(i)];
      if (active && sol.multipliers[i] > -1e-3) degenerate = true;
      if (!active && g[i] > -1e-3) degenerate = true;
    }
    if (degenerate && attempt < kMaxResample) continue;
    const Matrix oracle = fd_jacobian(
        [&](const Vector& xs) { return solve_constrained(P, xs, sol.y).y; }, x);
    return from_context(make_context(P, x, sol.y, sol.multipliers), oracle);
  }
}

TrialOutcome feasibility_trial(std::mt19937_64& rng) {
  const Index m = uniform_index(rng, 1, 6);
  const Index n = uniform_index(rng, 1, 8);
  const Matrix M = normal_vector(rng, m * n).reshaped(m, n);
  const Vector c = normal_vector(rng, m, 0.5);
  const DeclarativeProblem P = feasibility_problem(M, c);
  const Vector x = normal_vector(rng, n);
  const Solution sol = solve_equality(P, x, Vector::Zero(m));
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_equality(P, xs, sol.y).y; }, x);
  return from_context(make_context(P, x, sol.y), oracle);
}

TrialOutcome pathological_trial(std::mt19937_64& rng) {
  const DeclarativeProblem P = pathological_problem();
  const Vector x = Vector::Constant(1, uniform(rng, 0.2, 2.0));
  const double branch = random_sign(rng);
  const Solution sol = solve_equality(P, x, Vector::Constant(1, 1.0 + branch * x[0]));
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return solve_equality(P, xs, sol.y).y; }, x);
  return from_context(make_context(P, x, sol.y), oracle);
}

// --- pooling ----------------------------------------------------------------

TrialOutcome pooling_trial(std::mt19937_64& rng, Penalty kind) {
  const PenaltySpec spec{kind, 1.0};
  for (int attempt = 0;; ++attempt) {
    const Index n = uniform_index(rng, 2, 12);
    const Vector x = normal_vector(rng, n);
    const Solution sol = robust_pool(x, spec);
    const double y = sol.y[0];
    if (kind == Penalty::Huber || kind == Penalty::TruncatedQuadratic) {
      // Keep the stencil away from the kinks and require an inlier.
      double kink_gap = std::numeric_limits<double>::infinity();
      int inliers = 0;
      for (Index i = 0; i < n; ++i) {
        kink_gap = std::min(kink_gap, std::abs(std::abs(y - x[i]) - spec.alpha));
        inliers += std::abs(y - x[i]) <= spec.alpha ? 1 : 0;
      }
      if ((kink_gap < 1e-3 || inliers == 0) && attempt < kMaxResample) continue;
    }
    const Jacobian J = robust_pool_gradient(x, spec, y);
    const Matrix oracle = fd_jacobian(
        [&](const Vector& xs) { return robust_pool(xs, spec).y; }, x);
    return outcome(J.matrix, oracle, J.one_sided);
  }
}

// --- projection ---------------------------------------------------------------

// x = y* + tau sign(y*) with y* on the L1 sphere and full support, so the
// projection lands in the interior of a facet.
Vector l1_facet_point(std::mt19937_64& rng, Index n, double radius, double tau) {
  Vector mag(n);
  for (Index i = 0; i < n; ++i) mag[i] = uniform(rng, 0.2, 1.0);
  mag *= radius / mag.sum();
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = random_sign(rng) * (mag[i] + tau);
  return x;
}

// One coordinate outside [-r, r], the others well inside.
Vector linf_face_point(std::mt19937_64& rng, Index n, double radius) {
  Vector x(n);
  for (Index i = 0; i < n; ++i) x[i] = radius * uniform(rng, -0.9, 0.9);
  const Index k = uniform_index(rng, 0, n - 1);
  x[k] = random_sign(rng) * radius * uniform(rng, 1.1, 2.0);
  return x;
}

bool l1_stencil_safe(const Vector& x, const Vector& y) {
  double theta = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    if (y[i] != 0.0) {
      theta = std::abs(x[i]) - std::abs(y[i]);
      break;
    }
  }
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(std::abs(x[i]) - theta) < 1e-3) return false;
  }
  return true;
}

TrialOutcome projection_trial(std::mt19937_64& rng, Norm norm, Surface surface, bool masked) {
  const ProjectionSpec spec{norm, surface, 1.0, masked};
  for (int attempt = 0;; ++attempt) {
    const Index n = uniform_index(rng, 2, 8);
    Vector x;
    bool safe = true;
    switch (norm) {
      case Norm::L2: {
        x = normal_vector(rng, n);
        if (surface == Surface::Ball) x *= uniform(rng, 1.2, 3.0) / x.norm();
        break;
      }
      case Norm::L1:
        if (masked) {
          x = normal_vector(rng, n, 1.5);
          if (x.lpNorm<1>() < 1.2) x *= 1.2 / x.lpNorm<1>();
        } else {
          x = l1_facet_point(rng, n, 1.0, uniform(rng, 0.05, 1.0));
        }
        break;
      case Norm::Linf:
        if (masked) {
          x = normal_vector(rng, n, 1.5);
          for (Index i = 0; i < n; ++i) safe = safe && std::abs(std::abs(x[i]) - 1.0) > 1e-3;
          safe = safe && x.lpNorm<Eigen::Infinity>() > 1.0;
        } else {
          x = linf_face_point(rng, n, 1.0);
        }
        break;
    }
    const Solution sol = project(x, spec);
    if (norm == Norm::L1) safe = safe && l1_stencil_safe(x, sol.y);
    if (!safe && attempt < kMaxResample) continue;
    const Jacobian J = project_gradient(x, spec, sol.y);
    const Matrix oracle = fd_jacobian([&](const Vector& xs) { return project(xs, spec).y; }, x);
    return outcome(J.matrix, oracle, J.one_sided);
  }
}

TrialOutcome relu_trial(std::mt19937_64& rng) {
  const Index n = uniform_index(rng, 1, 8);
  Vector x = normal_vector(rng, n);
  for (Index i = 0; i < n; ++i) {
    if (std::abs(x[i]) < 1e-3) x[i] = std::copysign(1e-3, x[i]);
  }
  const Solution sol = declarative_relu(x);
  const DeclarativeProblem P = relu_problem(n);
  const Matrix oracle = fd_jacobian([](const Vector& xs) { return declarative_relu(xs).y; }, x);
  return from_context(make_context(P, x, sol.y, sol.multipliers), oracle);
}

// --- chains -------------------------------------------------------------------

TrialOutcome chain_trial(std::mt19937_64& rng) {
  const Index n = uniform_index(rng, 2, 8);
  NodeChain chain;
  chain.then(std::make_shared<ProjectionNode>(n, ProjectionSpec{}))
      .then(std::make_shared<PoolingNode>(n, PenaltySpec{Penalty::PseudoHuber, 0.5}))
      .then(std::make_shared<ImperativeNode>(
          "square", 1, 1, [](const Vector& z) { return Vector(z.array().square()); },
          [](const Vector& z) { return Matrix(Matrix::Constant(1, 1, 2.0 * z[0])); }));
  const Vector x = normal_vector(rng, n);
  const ChainTrace trace = chain_forward(chain, x);
  const Vector g = chain_backward(chain, trace, Vector::Ones(1));
  const Matrix oracle = fd_jacobian([&](const Vector& xs) { return chain_forward(chain, xs).output(); }, x);
  return outcome(g.transpose(), oracle);
}

TrialOutcome declarative_chain_trial(std::mt19937_64& rng) {
  const Index n = uniform_index(rng, 1, 8);
  const Index m = uniform_index(rng, 2, 6);
  const SmoothObjective obj = random_smooth_objective(rng, m, n);
  auto lower = std::make_shared<DeclarativeNode>(
      "smooth-argmin", smooth_problem(obj), [m](const Vector&) { return Vector(Vector::Zero(m)); });
  NodeChain chain;
  chain.then(lower).then(std::make_shared<ProjectionNode>(m, ProjectionSpec{}));
  const Vector x = normal_vector(rng, n);
  const Vector v = normal_vector(rng, m);
  const ChainTrace trace = chain_forward(chain, x);
  const Vector g = chain_backward(chain, trace, v);
  const Matrix oracle = fd_jacobian(
      [&](const Vector& xs) { return Vector::Constant(1, v.dot(chain_forward(chain, xs).output())); },
      x);
  TrialOutcome o = outcome(g.transpose(), oracle);
  o.paths.insert(GradientPath::Unconstrained);
  return o;
}

std::vector<GradCheckFamily> build_registry() {
  std::vector<GradCheckFamily> r;
  r.push_back({"unconstrained", "random smooth argmin, closed-form second derivatives", 1e-5,
               [](std::mt19937_64& g) { return unconstrained_trial(g, DerivativeLevel::Full); }});
  r.push_back({"unconstrained-numeric", "random smooth argmin, objective values only", 1e-5,
               [](std::mt19937_64& g) { return unconstrained_trial(g, DerivativeLevel::ValuesOnly); }});
  r.push_back({"pseudo-inverse", "scale-invariant alignment objective, singular Hessian", 1e-6,
               alignment_trial});
  r.push_back({"alignment-normalized", "alignment objective on the unit sphere", 1e-6,
               normalized_alignment_trial});
  r.push_back({"equality-linear", "fixed linear equality constraints", 1e-5, linear_equality_trial});
  r.push_back({"equality-nonlinear", "input-dependent sphere constraint", 1e-5,
               [](std::mt19937_64& g) { return sphere_equality_trial(g, true); }});
  r.push_back({"single-constraint", "one input-independent equality constraint", 1e-5,
               [](std::mt19937_64& g) { return sphere_equality_trial(g, false); }});
  r.push_back({"rank-repair", "duplicated equality row removed before the solve", 1e-5,
               rank_repair_trial});
  r.push_back({"inequality", "linear inequalities, strictly complementary solutions", 1e-5,
               inequality_trial});
  r.push_back({"feasibility", "as many constraints as outputs", 1e-5, feasibility_trial});
  r.push_back({"pathological", "(y - 1)^2 = x^2 on a random branch", 1e-6, pathological_trial});
  for (Penalty k : {Penalty::Quadratic, Penalty::PseudoHuber, Penalty::Huber, Penalty::Welsch,
                    Penalty::TruncatedQuadratic}) {
    std::string id = to_string(k);
    id.erase(std::remove(id.begin(), id.end(), '-'), id.end());
    if (k == Penalty::TruncatedQuadratic) id = "trunc-quad";
    r.push_back({"pool-" + id, std::string("robust pooling, ") + to_string(k) + " penalty", 1e-5,
                 [k](std::mt19937_64& g) { return pooling_trial(g, k); }});
  }
  struct ProjCase {
    const char* id;
    Norm norm;
    Surface surface;
    bool masked;
    double tol;
  };
  const ProjCase cases[] = {
      {"project-l1", Norm::L1, Surface::Sphere, false, 1e-6},
      {"project-l2", Norm::L2, Surface::Sphere, false, 1e-7},
      {"project-linf", Norm::Linf, Surface::Sphere, false, 1e-6},
      {"project-l1-masked", Norm::L1, Surface::Sphere, true, 1e-6},
      {"project-linf-masked", Norm::Linf, Surface::Sphere, true, 1e-6},
      {"project-l1-ball", Norm::L1, Surface::Ball, false, 1e-6},
      {"project-l2-ball", Norm::L2, Surface::Ball, false, 1e-7},
      {"project-linf-ball", Norm::Linf, Surface::Ball, false, 1e-6},
  };
  for (const ProjCase& c : cases) {
    r.push_back({c.id,
                 std::string("projection onto the ") + to_string(c.norm) + " " +
                     to_string(c.surface) + (c.masked ? ", masked gradient" : ""),
                 c.tol, [c](std::mt19937_64& g) {
                   return projection_trial(g, c.norm, c.surface, c.masked);
                 }});
  }
  r.push_back({"relu", "rectifier as projection onto the nonnegative orthant", 1e-6, relu_trial});
  r.push_back({"chain", "L2 projection, pseudo-Huber pooling, square", 1e-5, chain_trial});
  r.push_back({"chain-declarative", "smooth argmin followed by L2 projection", 1e-5,
               declarative_chain_trial});
  return r;
}

// --- demos ----------------------------------------------------------------------

BilevelTask robust_mean_task(int steps, double step_size, std::uint64_t seed) {
  std::mt19937_64 rng = trial_rng(seed, 0, stream_id("robust-mean-fit"));
  const Index inliers = 16;
  const Index outliers = 4;
  const Index nd = inliers + outliers;
  const double center = uniform(rng, 0.5, 1.5);
  Vector d(nd);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (Index i = 0; i < inliers; ++i) d[i] = center + noise(rng);
  for (Index i = inliers; i < nd; ++i) d[i] = center + uniform(rng, 2.0, 6.0);
  const double target = 2.0 * center;
  const PenaltySpec spec{Penalty::PseudoHuber, 0.5};

  DeclarativeProblem lower;
  lower.input_dim = nd + 1;
  lower.output_dim = 1;
  lower.objective = [spec](const Vector& x, const Vector& u) {
    return pooling_objective(x[0] * x.tail(x.size() - 1), spec, u[0]);
  };
  lower.derivatives.f_y = [spec](const Vector& x, const Vector& u) {
    double g = 0.0;
    for (Index i = 1; i < x.size(); ++i) g += penalty_d1(spec, u[0] - x[0] * x[i]);
    return Vector::Constant(1, g);
  };
  lower.derivatives.f_yy = [spec](const Vector& x, const Vector& u) {
    double h = 0.0;
    for (Index i = 1; i < x.size(); ++i) h += penalty_d2(spec, u[0] - x[0] * x[i]);
    return Matrix::Constant(1, 1, h);
  };
  lower.derivatives.f_xy = [spec](const Vector& x, const Vector& u) {
    Matrix B = Matrix::Zero(1, x.size());
    for (Index i = 1; i < x.size(); ++i) {
      const double w = penalty_d2(spec, u[0] - x[0] * x[i]);
      B(0, 0) -= w * x[i];
      B(0, i) = -w * x[0];
    }
    return B;
  };

  BilevelTask task;
  task.lower_problem = lower;
  task.lower_solver = [spec](const Vector& x) {
    return robust_pool(x[0] * x.tail(x.size() - 1), spec);
  };
  task.upper_objective = [target](const Vector&, const Vector& y) {
    return 0.5 * (y[0] - target) * (y[0] - target);
  };
  task.upper_grad_x = [](const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
  task.upper_grad_y = [target](const Vector&, const Vector& y) {
    return Vector(Vector::Constant(1, y[0] - target));
  };
  task.x0.resize(nd + 1);
  task.x0[0] = 1.0;
  task.x0.tail(nd) = d;
  task.learnable_mask.assign(static_cast<std::size_t>(nd + 1), false);
  task.learnable_mask[0] = true;
  task.step_size = step_size;
  task.max_iters = steps;
  return task;
}

BilevelTask projection_head_task(int steps, double step_size, std::uint64_t seed) {
  std::mt19937_64 rng = trial_rng(seed, 0, stream_id("projection-head-fit"));
  const Index k = 3;
  const Vector d = normal_vector(rng, k);
  Vector target = normal_vector(rng, k);
  target /= target.norm();

  DeclarativeProblem lower;
  lower.input_dim = 2 * k;
  lower.output_dim = k;
  lower.num_eq = 1;
  auto shifted = [k](const Vector& x) { return Vector(x.head(k) + x.tail(k)); };
  lower.objective = [shifted](const Vector& x, const Vector& u) {
    return 0.5 * (u - shifted(x)).squaredNorm();
  };
  lower.eq_constraints = [](const Vector&, const Vector& u) {
    return Vector::Constant(1, u.squaredNorm() - 1.0);
  };
  lower.derivatives.f_y = [shifted](const Vector& x, const Vector& u) { return Vector(u - shifted(x)); };
  lower.derivatives.f_yy = [k](const Vector&, const Vector&) { return Matrix(Matrix::Identity(k, k)); };
  lower.derivatives.f_xy = [k](const Vector&, const Vector&) {
    Matrix B(k, 2 * k);
    B << -Matrix::Identity(k, k), -Matrix::Identity(k, k);
    return B;
  };
  lower.derivatives.h_y = [](const Vector&, const Vector& u) { return Matrix(2.0 * u.transpose()); };
  lower.derivatives.h_x = [k](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 2 * k)); };
  lower.derivatives.h_yy = [k](const Vector&, const Vector&) {
    return std::vector<Matrix>{2.0 * Matrix::Identity(k, k)};
  };
  lower.derivatives.h_xy = [k](const Vector&, const Vector&) {
    return std::vector<Matrix>{Matrix::Zero(k, 2 * k)};
  };

  BilevelTask task;
  task.lower_problem = lower;
  task.initial_guess = [shifted](const Vector& x) {
    const Vector z = shifted(x);
    const double nz = z.norm();
    return nz > 0.0 ? Vector(z / nz) : Vector(Vector::Unit(z.size(), 0));
  };
  task.upper_objective = [target](const Vector&, const Vector& y) {
    return 0.5 * (y - target).squaredNorm();
  };
  task.upper_grad_x = [](const Vector& x, const Vector&) { return Vector(Vector::Zero(x.size())); };
  task.upper_grad_y = [target](const Vector&, const Vector& y) { return Vector(y - target); };
  task.x0.resize(2 * k);
  task.x0.head(k).setZero();
  task.x0.tail(k) = d;
  task.learnable_mask.assign(static_cast<std::size_t>(2 * k), false);
  for (Index i = 0; i < k; ++i) task.learnable_mask[static_cast<std::size_t>(i)] = true;
  task.step_size = step_size;
  task.max_iters = steps;
  return task;
}

}  // namespace

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffULL); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(trial), hi(trial)};
  return std::mt19937_64(seq);
}

double relative_error(const Matrix& J, const Matrix& ref) {
  if (J.rows() != ref.rows() || J.cols() != ref.cols()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "comparing " + shape_string(J.rows(), J.cols()) + " against " +
                        shape_string(ref.rows(), ref.cols()));
  }
  const double diff = (J - ref).norm();
  const double scale = ref.norm();
  if (!std::isfinite(diff)) return std::numeric_limits<double>::infinity();
  if (scale < 1e-300) return diff < 1e-300 ? 0.0 : diff;
  return diff / scale;
}

const std::vector<GradCheckFamily>& gradcheck_registry() {
  static const std::vector<GradCheckFamily> registry = build_registry();
  return registry;
}

const GradCheckFamily* find_gradcheck_family(const std::string& id) {
  for (const GradCheckFamily& f : gradcheck_registry()) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

std::vector<std::string> builtin_node_ids() {
  return {"pool-quadratic",    "pool-pseudohuber",    "pool-huber",        "pool-welsch",
          "pool-trunc-quad",   "project-l1",          "project-l2",        "project-linf",
          "project-l1-masked", "project-linf-masked", "project-l1-ball",   "project-l2-ball",
          "project-linf-ball", "relu",                "chain",             "chain-declarative"};
}

GradCheckReport run_gradcheck(const GradCheckFamily& family, int trials, std::uint64_t seed,
                              std::optional<double> tolerance) {
  GradCheckReport rep;
  rep.node_id = family.id;
  rep.trials = trials;
  rep.seed = seed;
  rep.tolerance = tolerance.value_or(family.tolerance);
  double total = 0.0;
  const std::uint64_t stream = stream_id(family.id);
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng = trial_rng(seed, static_cast<std::uint64_t>(t), stream);
    TrialOutcome o;
    try {
      o = family.trial(rng);
    } catch (const NodeError&) {
      o.rel_err = std::numeric_limits<double>::infinity();
    }
    rep.max_rel_err = std::max(rep.max_rel_err, o.rel_err);
    total += o.rel_err;
    rep.one_sided_count += o.one_sided ? 1 : 0;
    rep.fallback_count += o.fallback ? 1 : 0;
    rep.paths.insert(o.paths.begin(), o.paths.end());
  }
  rep.mean_rel_err = trials > 0 ? total / trials : 0.0;
  return rep;
}

// --- study ----------------------------------------------------------------------

void validate(const StudyConfig& c) {
  auto fail = [](const std::string& what) { throw UsageError("study config: " + what); };
  if (c.points < 1) fail("points must be >= 1");
  if (c.trials < 1) fail("trials must be >= 1");
  if (!(c.inlier_sigma >= 0.0)) fail("inlier sigma must be >= 0");
  if (!(c.center_low <= c.center_high)) fail("center range is empty");
  if (!(c.outlier_low < c.outlier_high)) fail("outlier range is empty");
  if (!(c.alpha > 0.0) || !std::isfinite(c.alpha)) fail("alpha must be positive");
  if (c.fractions.empty()) fail("no outlier fractions given");
  for (double f : c.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) fail("outlier fraction " + format_number(f) + " not in [0, 1]");
  }
}

std::vector<RobustnessStudyRow> robustness_study(const StudyConfig& config) {
  validate(config);
  const Penalty kinds[] = {Penalty::Quadratic, Penalty::PseudoHuber, Penalty::Huber,
                           Penalty::Welsch, Penalty::TruncatedQuadratic};
  std::vector<RobustnessStudyRow> rows;
  for (std::size_t fi = 0; fi < config.fractions.size(); ++fi) {
    const double fraction = config.fractions[fi];
    const Index n_out = static_cast<Index>(std::llround(fraction * config.points));
    const Index n_in = config.points - n_out;
    std::vector<double> err_sum(5, 0.0);
    std::vector<int> failures(5, 0);
    for (int t = 0; t < config.trials; ++t) {
      std::mt19937_64 rng = trial_rng(config.seed, static_cast<std::uint64_t>(t),
                                      stream_id("study") + fi);
      const double center = uniform(rng, config.center_low, config.center_high);
      std::normal_distribution<double> noise(center, config.inlier_sigma);
      Vector x(config.points);
      for (Index i = 0; i < n_in; ++i) x[i] = noise(rng);
      for (Index i = n_in; i < config.points; ++i) {
        x[i] = uniform(rng, config.outlier_low, config.outlier_high);
      }
      for (std::size_t k = 0; k < 5; ++k) {
        try {
          const double y = robust_pool(x, {kinds[k], config.alpha}).y[0];
          err_sum[k] += std::abs(y - center);
        } catch (const NodeError&) {
          ++failures[k];
        }
      }
    }
    for (std::size_t k = 0; k < 5; ++k) {
      RobustnessStudyRow row;
      row.outlier_fraction = fraction;
      row.penalty = kinds[k];
      row.trials = config.trials;
      row.failures = failures[k];
      const int ok = config.trials - failures[k];
      row.estimator_error = ok > 0 ? err_sum[k] / ok : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
    }
  }
  return rows;
}

// --- demos ----------------------------------------------------------------------

std::vector<std::string> train_task_names() { return {"robust-mean-fit", "projection-head-fit"}; }

BilevelTask make_train_task(const std::string& name, int steps, double step_size,
                            std::uint64_t seed) {
  if (steps < 0) throw UsageError("steps must be >= 0, got " + std::to_string(steps));
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw UsageError("step size must be positive, got " + format_number(step_size));
  }
  if (name == "robust-mean-fit") return robust_mean_task(steps, step_size, seed);
  if (name == "projection-head-fit") return projection_head_task(steps, step_size, seed);
  throw UsageError("unknown training task '" + name +
                   "' (expected robust-mean-fit or projection-head-fit)");
}

// --- commands -------------------------------------------------------------------

Report cmd_gradcheck(const std::string& node, int trials, std::uint64_t seed,
                     std::optional<double> tolerance) {
  if (trials < 1) throw UsageError("trials must be >= 1, got " + std::to_string(trials));
  if (tolerance && !(*tolerance > 0.0)) throw UsageError("tolerance must be positive");
  std::vector<const GradCheckFamily*> selected;
  if (node == "all") {
    for (const GradCheckFamily& f : gradcheck_registry()) selected.push_back(&f);
  } else if (const GradCheckFamily* f = find_gradcheck_family(node)) {
    selected.push_back(f);
  } else {
    std::string known;
    for (const GradCheckFamily& f : gradcheck_registry()) known += (known.empty() ? "" : ", ") + f.id;
    throw UsageError("unknown node '" + node + "'; known nodes: all, " + known);
  }
  Report r;
  r.command = "gradcheck";
  r.seed = seed;
  r.add_config("node", node);
  r.add_config("trials", static_cast<std::int64_t>(trials));
  if (tolerance) r.add_config("tolerance", *tolerance);
  r.columns = {"node_id",        "trials",         "max_rel_err", "mean_rel_err",
               "one_sided_count", "fallback_count", "seed",        "tolerance",
               "passed",          "paths"};
  for (const GradCheckFamily* f : selected) {
    const GradCheckReport g = run_gradcheck(*f, trials, seed, tolerance);
    std::string paths;
    for (GradientPath p : g.paths) paths += (paths.empty() ? "" : ";") + std::string(to_string(p));
    r.rows.push_back({g.node_id, static_cast<std::int64_t>(g.trials), g.max_rel_err,
                      g.mean_rel_err, static_cast<std::int64_t>(g.one_sided_count),
                      static_cast<std::int64_t>(g.fallback_count),
                      static_cast<std::int64_t>(g.seed), g.tolerance, g.passed(), paths});
    r.passed = r.passed && g.passed();
  }
  return r;
}

Report cmd_pool(const Vector& values, const PenaltySpec& spec, std::uint64_t seed) {
  if (values.size() < 1) throw UsageError("pool needs at least one input value");
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) {
    throw UsageError("alpha must be positive, got " + format_number(spec.alpha));
  }
  const Solution sol = robust_pool(values, spec);
  Report r;
  r.command = "pool";
  r.seed = seed;
  r.add_config("penalty", std::string(to_string(spec.kind)));
  r.add_config("alpha", spec.alpha);
  r.add_config("n", static_cast<std::int64_t>(values.size()));
  r.columns = {"y", "objective", "gradient", "gradient_defined", "one_sided", "iterations", "note"};
  std::vector<double> grad;
  bool defined = true;
  bool one_sided = false;
  std::string note;
  try {
    const Jacobian J = robust_pool_gradient(values, spec, sol.y[0]);
    grad = to_list(J.matrix.row(0).transpose());
    one_sided = J.one_sided;
  } catch (const NodeError& e) {
    if (e.kind() != ErrorKind::UndefinedGradient) throw;
    defined = false;
    note = e.what();
  }
  r.rows.push_back({sol.y[0], sol.objective_value, grad, defined, one_sided,
                    static_cast<std::int64_t>(sol.solver_info.iterations), note});
  return r;
}

Report cmd_project(const Vector& values, const ProjectionSpec& spec, std::uint64_t seed) {
  if (values.size() < 1) throw UsageError("project needs at least one input value");
  if (!(spec.radius > 0.0) || !std::isfinite(spec.radius)) {
    throw UsageError("radius must be positive, got " + format_number(spec.radius));
  }
  const Solution sol = project(values, spec);
  const Jacobian J = project_gradient(values, spec, sol.y);
  Report r;
  r.command = "project";
  r.seed = seed;
  r.add_config("norm", std::string(to_string(spec.norm)));
  r.add_config("surface", std::string(to_string(spec.surface)));
  r.add_config("radius", spec.radius);
  r.add_config("masked", spec.masked_gradient);
  r.add_config("n", static_cast<std::int64_t>(values.size()));
  r.columns = {"index", "x", "y", "jacobian_row", "multiplier", "one_sided"};
  for (Index i = 0; i < values.size(); ++i) {
    r.rows.push_back({static_cast<std::int64_t>(i), values[i], sol.y[i],
                      to_list(J.matrix.row(i).transpose()), sol.multipliers[0], J.one_sided});
  }
  return r;
}

Report cmd_study(const StudyConfig& config) {
  const std::vector<RobustnessStudyRow> rows = robustness_study(config);
  Report r;
  r.command = "study";
  r.seed = config.seed;
  r.add_config("points", static_cast<std::int64_t>(config.points));
  r.add_config("inlier_sigma", config.inlier_sigma);
  r.add_config("center_range", std::vector<double>{config.center_low, config.center_high});
  r.add_config("outlier_range", std::vector<double>{config.outlier_low, config.outlier_high});
  r.add_config("fractions", config.fractions);
  r.add_config("trials", static_cast<std::int64_t>(config.trials));
  r.add_config("alpha", config.alpha);
  r.columns = {"outlier_fraction", "penalty", "alpha", "estimator_error", "trials", "failures"};
  for (const RobustnessStudyRow& row : rows) {
    r.rows.push_back({row.outlier_fraction, std::string(to_string(row.penalty)), config.alpha,
                      row.estimator_error, static_cast<std::int64_t>(row.trials),
                      static_cast<std::int64_t>(row.failures)});
  }
  return r;
}

Report cmd_train(const std::string& task_name, int steps, double step_size, std::uint64_t seed) {
  const BilevelTask task = make_train_task(task_name, steps, step_size, seed);
  const TrainTrace trace = bilevel_train(task);
  Report r;
  r.command = "train";
  r.seed = seed;
  r.add_config("task", task_name);
  r.add_config("steps", static_cast<std::int64_t>(steps));
  r.add_config("step_size", step_size);
  r.columns = {"iteration", "J", "theta", "one_sided"};
  for (const TrainRow& row : trace.rows) {
    r.rows.push_back({static_cast<std::int64_t>(row.iteration), row.J, to_list(row.theta),
                      row.one_sided});
  }
  return r;
}

}  // namespace ddn
