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

#include "ddn/solve.hpp"

#include "ddn/implicit_diff.hpp"
#include "ddn/numdiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace ddn {

namespace {

constexpr int kPolishSteps = 3;
constexpr int kMaxEscapes = 5;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void check_start(const DeclarativeProblem& problem, const Vector& x, const Vector& y0) {
  if (x.size() != problem.input_dim || y0.size() != problem.output_dim) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "solver called with x:" + std::to_string(x.size()) + " y0:" +
                        std::to_string(y0.size()) + ", problem declares n=" +
                        std::to_string(problem.input_dim) + " m=" +
                        std::to_string(problem.output_dim));
  }
}

// Newton direction for a symmetric matrix that may be indefinite.
Vector regularized_newton_step(const Matrix& H, const Vector& g) {
  const Index m = H.rows();
  double mu = 0.0;
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < 60; ++attempt) {
    Eigen::LLT<Matrix> llt(H + mu * Matrix::Identity(m, m));
    if (llt.info() == Eigen::Success && llt.rcond() > 1e-14) return -llt.solve(g);
    mu = mu == 0.0 ? 1e-8 * scale : mu * 10.0;
  }
  return -g;
}

// Full Newton steps past the tolerance while they keep shrinking the gradient.
void polish_unconstrained(ProblemDerivatives& d, const Vector& x, Vector& y, Vector g) {
  for (int it = 0; it < kPolishSteps; ++it) {
    const Vector cand = y + regularized_newton_step(d.f_yy(x, y), g);
    const Vector gc = d.f_y(x, cand);
    if (!gc.allFinite() || inf_norm(gc) >= inf_norm(g)) return;
    y = cand;
    g = gc;
  }
}

// Unit direction of most negative curvature of W on the null space of A, or
// an empty vector when W is positive semidefinite there up to rounding.
Vector negative_curvature(const Matrix& W, const Matrix& A) {
  const Index m = W.rows();
  Matrix Z;
  if (A.rows() == 0) {
    Z = Matrix::Identity(m, m);
  } else {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    const double cut = 1e-10 * std::max(1.0, s.size() > 0 ? s[0] : 0.0);
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) rank += s[i] > cut ? 1 : 0;
    if (rank >= m) return Vector();
    Z = svd.matrixV().rightCols(m - rank);
  }
  const Matrix Ws = 0.5 * (W + W.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(Z.transpose() * Ws * Z);
  const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
  if (es.info() != Eigen::Success || es.eigenvalues()[0] >= -1e-6 * scale) return Vector();
  const Vector dir = Z * es.eigenvectors().col(0);
  return dir / dir.norm();
}

struct KktState {
  Vector y;
  Vector lambda;  // stacked over (eq_rows, ineq_rows)
  int iterations = 0;
  bool converged = false;
};

Matrix stacked_rows(const Matrix& full_eq, const Matrix& full_ineq,
                    const std::vector<Index>& ineq_rows) {
  Matrix out(full_eq.rows() + static_cast<Index>(ineq_rows.size()), full_eq.cols());
  out.topRows(full_eq.rows()) = full_eq;
  for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
    out.row(full_eq.rows() + static_cast<Index>(r)) = full_ineq.row(ineq_rows[r]);
  }
  return out;
}

Vector stacked_values(const Vector& eq, const Vector& ineq, const std::vector<Index>& ineq_rows) {
  Vector out(eq.size() + static_cast<Index>(ineq_rows.size()));
  out.head(eq.size()) = eq;
  for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
    out[eq.size() + static_cast<Index>(r)] = ineq[ineq_rows[r]];
  }
  return out;
}

// D_YY of f - lambda^T c for the stacked constraints c.
Matrix lagrangian_hessian(const ProblemDerivatives& d, const Vector& x, const Vector& y,
                          const Vector& lambda, Index p, const std::vector<Index>& ineq_rows) {
  Matrix W = d.f_yy(x, y);
  if (lambda.size() == 0 || lambda.cwiseAbs().maxCoeff() == 0.0) return W;
  if (p > 0) {
    const std::vector<Matrix> hyy = d.h_yy(x, y);
    for (Index i = 0; i < p; ++i) W -= lambda[i] * hyy[i];
  }
  if (!ineq_rows.empty()) {
    const std::vector<Matrix> gyy = d.g_yy(x, y);
    for (std::size_t i = 0; i < ineq_rows.size(); ++i) {
      W -= lambda[p + static_cast<Index>(i)] * gyy[ineq_rows[i]];
    }
  }
  return W;
}

// Newton iteration on grad f - A^T lambda = 0, c(y) = 0 where c stacks h and
// the selected inequality rows.
KktState kkt_newton(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                    const std::vector<Index>& ineq_rows, const SolverOptions& options) {
  ProblemDerivatives d(problem);
  const Index m = problem.output_dim;
  const Index p = problem.num_eq;
  const Index k = p + static_cast<Index>(ineq_rows.size());

  auto constraint_values = [&](const Vector& y) {
    return stacked_values(d.h(x, y), d.g(x, y), ineq_rows);
  };
  auto constraint_jacobian = [&](const Vector& y) {
    return stacked_rows(d.h_y(x, y), d.g_y(x, y), ineq_rows);
  };
  auto residual = [&](const Vector& y, const Vector& lam, Vector* grad_out, Matrix* a_out,
                      Vector* c_out) {
    const Vector g = d.f_y(x, y);
    const Matrix A = constraint_jacobian(y);
    const Vector c = constraint_values(y);
    Vector r(m + k);
    r.head(m) = g - A.transpose() * lam;
    r.tail(k) = c;
    if (grad_out) *grad_out = g;
    if (a_out) *a_out = A;
    if (c_out) *c_out = c;
    return r;
  };

  KktState state;
  state.y = y0;
  {
    const Matrix A = constraint_jacobian(state.y);
    try {
      state.lambda = recover_multipliers(A, d.f_y(x, state.y));
    } catch (const NodeError&) {
      state.lambda = Vector::Zero(k);
    }
  }

  int polish = kPolishSteps;
  double rho = 0.0;
  for (int it = 0; it < options.max_iters; ++it) {
    state.iterations = it;
    Vector grad;
    Matrix A;
    Vector c;
    const Vector r = residual(state.y, state.lambda, &grad, &A, &c);
    const bool done = inf_norm(r.head(m)) <= options.stationarity_tol &&
                      inf_norm(r.tail(k)) <= options.feasibility_tol;
    if (done && polish == 0) {
      state.converged = true;
      return state;
    }
    if (done) --polish;

    const Matrix W = lagrangian_hessian(d, x, state.y, state.lambda, p, ineq_rows);

    // Add curvature until the step is a descent direction of the model on
    // the constraint tangent space.
    // Linearized constraints are only trusted over a bounded region.
    const double radius = 2.0 * std::max(1.0, state.y.norm());
    Vector step;
    double mu = 0.0;
    const double scale = std::max(1.0, W.cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 30; ++attempt) {
      Matrix K = Matrix::Zero(m + k, m + k);
      K.topLeftCorner(m, m) = W;
      K.topLeftCorner(m, m).diagonal().array() += mu;
      K.topRightCorner(m, k) = -A.transpose();
      K.bottomLeftCorner(k, m) = A;
      step = Eigen::PartialPivLU<Matrix>(K).solve(-r);
      const Vector dy = step.head(m);
      if (step.allFinite() &&
          dy.dot(W * dy) + mu * dy.squaredNorm() >=
              std::max(1e-10 * scale, 0.5 * mu) * dy.squaredNorm() &&
          (done || dy.norm() <= radius)) {
        break;
      }
      mu = mu == 0.0 ? 1e-6 * scale : mu * 10.0;
    }
    if (!step.allFinite()) {
      step = Vector::Zero(m + k);
      step.head(m) = regularized_newton_step(W, r.head(m));
    }
    const Vector dy = step.head(m);
    const Vector lam_next = state.lambda + step.tail(k);

    if (done) {
      const Vector y_new = state.y + dy;
      const Vector r_new = residual(y_new, lam_next, nullptr, nullptr, nullptr);
      if (!r_new.allFinite() || r_new.squaredNorm() >= r.squaredNorm()) {
        state.converged = true;
        return state;
      }
      state.y = y_new;
      state.lambda = lam_next;
      continue;
    }

    // Exact-penalty merit f + rho |c|_1.
    if (k > 0) rho = std::max(rho, 2.0 * inf_norm(lam_next) + 1.0);
    auto merit = [&](const Vector& y) {
      const Vector cy = constraint_values(y);
      return problem.objective(x, y) + rho * cy.lpNorm<1>();
    };
    const double phi0 = merit(state.y);
    const double slope = grad.dot(dy) - rho * c.lpNorm<1>();
    const double flat = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(phi0));
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40 && slope < 0.0 && -t * slope > flat; ++ls) {
      const Vector y_new = state.y + t * dy;
      const double phi = merit(y_new);
      if (std::isfinite(phi) && phi <= phi0 + 1e-4 * t * slope) {
        state.y = y_new;
        accepted = true;
        break;
      }
      if (ls == 0 && k > 0) {
        // Second-order correction: pull the full step back onto the
        // linearized constraints before shortening it.
        const Vector c_new = constraint_values(y_new);
        const Vector soc =
            A.transpose() * (A * A.transpose()).completeOrthogonalDecomposition().solve(c_new);
        const Vector y_soc = y_new - soc;
        const double phi_soc = merit(y_soc);
        if (soc.allFinite() && std::isfinite(phi_soc) && phi_soc <= phi0 + 1e-4 * slope) {
          state.y = y_soc;
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (accepted) {
      state.lambda += t * step.tail(k);
    } else {
      // Merit is flat to rounding; keep a full step that shrinks the residual.
      const Vector y_new = state.y + dy;
      const Vector r_new = residual(y_new, lam_next, nullptr, nullptr, nullptr);
      if (!r_new.allFinite() || r_new.squaredNorm() >= r.squaredNorm()) break;
      state.y = y_new;
      state.lambda = lam_next;
    }
    if (!state.y.allFinite()) break;
  }
  Vector grad;
  const Vector r = residual(state.y, state.lambda, &grad, nullptr, nullptr);
  state.converged = inf_norm(r.head(m)) <= options.stationarity_tol &&
                    inf_norm(r.tail(k)) <= options.feasibility_tol;
  state.iterations = options.max_iters;
  return state;
}

// kkt_newton, restarted off constrained saddle points along a direction of
// negative curvature. A restart is kept only if it lowers f.
KktState kkt_solve(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                   const std::vector<Index>& ineq_rows, const SolverOptions& options) {
  KktState state = kkt_newton(problem, x, y0, ineq_rows, options);
  const ProblemDerivatives d(problem);
  const Index p = problem.num_eq;
  const Index k = p + static_cast<Index>(ineq_rows.size());
  auto constraint_values = [&](const Vector& y) {
    return stacked_values(d.h(x, y), d.g(x, y), ineq_rows);
  };
  auto constraint_jacobian = [&](const Vector& y) {
    return stacked_rows(d.h_y(x, y), d.g_y(x, y), ineq_rows);
  };
  for (int escape = 0; escape < kMaxEscapes && state.converged; ++escape) {
    const Matrix W = lagrangian_hessian(d, x, state.y, state.lambda, p, ineq_rows);
    const Vector dir = negative_curvature(W, constraint_jacobian(state.y));
    if (dir.size() == 0) break;
    const double f0 = problem.objective(x, state.y);
    const double reach = std::max(1.0, state.y.norm());
    bool moved = false;
    for (double t = reach; t > 1e-3 * reach && !moved; t *= 0.25) {
      for (double sign : {1.0, -1.0}) {
        Vector yt = state.y + sign * t * dir;
        for (int gn = 0; gn < 3 && k > 0; ++gn) {
          const Matrix A = constraint_jacobian(yt);
          yt -= A.transpose() *
                (A * A.transpose()).completeOrthogonalDecomposition().solve(constraint_values(yt));
        }
        if (!yt.allFinite()) continue;
        const KktState trial = kkt_newton(problem, x, yt, ineq_rows, options);
        if (trial.converged &&
            problem.objective(x, trial.y) < f0 - 1e-10 * (1.0 + std::abs(f0))) {
          const int used = state.iterations;
          state = trial;
          state.iterations += used;
          moved = true;
          break;
        }
      }
    }
    if (!moved) break;
  }
  return state;
}

Solution make_solution(const DeclarativeProblem& problem, const Vector& x, const KktState& state,
                       const std::vector<Index>& ineq_rows, const SolverOptions& options) {
  Solution sol;
  sol.y = state.y;
  sol.objective_value = problem.objective(x, state.y);
  const Index p = problem.num_eq;
  const Index q = problem.num_ineq;
  sol.multipliers = Vector::Zero(p + q);
  sol.multipliers.head(p) = state.lambda.head(p);
  for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
    sol.multipliers[p + ineq_rows[r]] = state.lambda[p + static_cast<Index>(r)];
  }
  sol.active_set.assign(static_cast<std::size_t>(q), false);
  if (q > 0) {
    const Vector g = problem.ineq_constraints(x, state.y);
    for (Index i = 0; i < q; ++i) sol.active_set[static_cast<std::size_t>(i)] = g[i] >= -options.active_tol;
  }
  sol.solver_info.iterations = state.iterations;
  sol.solver_info.converged = state.converged;
  return sol;
}

}  // namespace

Solution solve_unconstrained(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                             const SolverOptions& options) {
  check_start(problem, x, y0);
  ProblemDerivatives d(problem);
  Vector y = y0;
  double fy = problem.objective(x, y);
  int escapes = 0;
  for (int it = 0; it < options.max_iters; ++it) {
    const Vector g = d.f_y(x, y);
    if (inf_norm(g) <= options.stationarity_tol) {
      polish_unconstrained(d, x, y, g);
      fy = problem.objective(x, y);
      if (escapes < kMaxEscapes) {
        // Saddle point: step along the most negative curvature direction.
        const Vector dir = negative_curvature(d.f_yy(x, y), Matrix(0, y.size()));
        bool moved = false;
        const double reach = std::max(1.0, y.norm());
        for (double t = reach; dir.size() > 0 && t > 1e-6 * reach && !moved; t *= 0.5) {
          for (double sign : {1.0, -1.0}) {
            const Vector cand = y + sign * t * dir;
            const double fc = problem.objective(x, cand);
            if (std::isfinite(fc) && fc < fy - 1e-10 * (1.0 + std::abs(fy))) {
              y = cand;
              fy = fc;
              moved = true;
              break;
            }
          }
        }
        ++escapes;
        if (moved) continue;
      }
      Solution sol;
      sol.y = y;
      sol.objective_value = fy;
      sol.multipliers = Vector::Zero(0);
      sol.solver_info = {it, true, 0};
      return sol;
    }
    const Vector step = regularized_newton_step(d.f_yy(x, y), g);
    const double slope = g.dot(step);
    double t = 1.0;
    bool accepted = false;
    // Below this predicted decrease f is flat to rounding.
    const double flat = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(fy));
    for (int ls = 0; ls < 60 && -t * slope > flat; ++ls) {
      const Vector cand = y + t * step;
      const double fc = problem.objective(x, cand);
      if (std::isfinite(fc) && fc <= fy + 1e-4 * t * slope) {
        y = cand;
        fy = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Accept a full step that reduces the gradient.
      const Vector cand = y + step;
      if (inf_norm(d.f_y(x, cand)) < inf_norm(g)) {
        y = cand;
        fy = problem.objective(x, y);
      } else {
        break;
      }
    }
  }
  const double gnorm = inf_norm(d.f_y(x, y));
  throw NodeError(ErrorKind::SolverDiverged,
                  "unconstrained Newton stopped with |D_Y f|_inf = " + format_real(gnorm) +
                      " after " + std::to_string(options.max_iters) + " iterations (m=" +
                      std::to_string(problem.output_dim) + ")");
}

Solution solve_equality(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                        const SolverOptions& options) {
  check_start(problem, x, y0);
  if (!problem.has_eq()) return solve_unconstrained(problem, x, y0, options);
  const KktState state = kkt_solve(problem, x, y0, {}, options);
  if (!state.converged) {
    throw NodeError(ErrorKind::SolverDiverged,
                    "KKT Newton failed to converge (m=" + std::to_string(problem.output_dim) +
                        ", p=" + std::to_string(problem.num_eq) + ")");
  }
  Solution sol = make_solution(problem, x, state, {}, options);
  return sol;
}

Solution solve_constrained(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
                           const SolverOptions& options) {
  check_start(problem, x, y0);
  if (!problem.has_ineq()) return solve_equality(problem, x, y0, options);
  const Index p = problem.num_eq;

  std::vector<Index> working;
  {
    const Vector g0 = problem.ineq_constraints(x, y0);
    for (Index i = 0; i < g0.size(); ++i) {
      if (g0[i] >= -options.active_tol) working.push_back(i);
    }
  }
  Vector y = y0;
  int total_iters = 0;
  for (int change = 0; change <= options.max_active_set_changes; ++change) {
    KktState state;
    if (p == 0 && working.empty()) {
      Solution unc = solve_unconstrained(problem, x, y, options);
      state.y = unc.y;
      state.lambda = Vector::Zero(0);
      state.converged = true;
      state.iterations = unc.solver_info.iterations;
    } else {
      state = kkt_solve(problem, x, y, working, options);
    }
    total_iters += state.iterations;
    if (!state.converged) {
      throw NodeError(ErrorKind::SolverDiverged,
                      "active-set subproblem with " + std::to_string(working.size()) +
                          " working inequalities did not converge (m=" +
                          std::to_string(problem.output_dim) + ")");
    }

    // Wrong-signed multiplier (lambda_i > 0 for g_i <= 0): release the row.
    Index release = -1;
    double worst = options.stationarity_tol;
    for (std::size_t r = 0; r < working.size(); ++r) {
      const double lam = state.lambda[p + static_cast<Index>(r)];
      if (lam > worst) {
        worst = lam;
        release = static_cast<Index>(r);
      }
    }
    const Vector g = problem.ineq_constraints(x, state.y);
    Index add = -1;
    double violation = options.feasibility_tol;
    for (Index i = 0; i < g.size(); ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end()) continue;
      if (g[i] > violation) {
        violation = g[i];
        add = i;
      }
    }
    if (add >= 0) {
      working.push_back(add);
      std::sort(working.begin(), working.end());
      // Restart from the previous feasible iterate.
      continue;
    }
    y = state.y;
    if (release >= 0) {
      working.erase(working.begin() + release);
      continue;
    }
    Solution sol = make_solution(problem, x, state, working, options);
    sol.solver_info.iterations = total_iters;
    sol.solver_info.restarts = change;
    return sol;
  }
  throw NodeError(ErrorKind::SolverDiverged,
                  "active-set method exceeded " + std::to_string(options.max_active_set_changes) +
                      " working-set changes (q=" + std::to_string(problem.num_ineq) + ")");
}

Solution solve(const DeclarativeProblem& problem, const Vector& x, const Vector& y0,
               const SolverOptions& options) {
  if (problem.has_ineq()) return solve_constrained(problem, x, y0, options);
  if (problem.has_eq()) return solve_equality(problem, x, y0, options);
  return solve_unconstrained(problem, x, y0, options);
}

}  // namespace ddn
