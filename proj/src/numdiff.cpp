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

#include "ddn/numdiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddn {

namespace {

const double kEps = std::numeric_limits<double>::epsilon();
const double kCubeRootEps = std::cbrt(kEps);
const double kFourthRootEps = std::sqrt(std::sqrt(kEps));

double first_step(double v) { return kCubeRootEps * std::max(1.0, std::abs(v)); }
double second_step(double v) { return kFourthRootEps * std::max(1.0, std::abs(v)); }

void check_finite(const Vector& v, const char* what, Index coord) {
  if (!v.allFinite()) {
    throw NodeError(ErrorKind::UndefinedGradient,
                    std::string("non-finite value of ") + what + " while differencing coordinate " +
                        std::to_string(coord));
  }
}

// Blocks of second derivatives of a vector function F : (x, u) -> R^k.
// yy[c] is m x m and xy[c] is m x n for each component c.
void second_blocks_from_values(const VectorFn& F, Index k, const Vector& x, const Vector& u,
                               std::vector<Matrix>* yy, std::vector<Matrix>* xy) {
  const Index m = u.size();
  const Index n = x.size();
  Vector up = u;
  Vector xp = x;
  if (yy) {
    yy->assign(k, Matrix::Zero(m, m));
    const Vector f0 = F(x, u);
    for (Index i = 0; i < m; ++i) {
      const double hi = second_step(u[i]);
      up[i] = u[i] + hi;
      const Vector fp = F(x, up);
      up[i] = u[i] - hi;
      const Vector fm = F(x, up);
      up[i] = u[i];
      check_finite(fp, "constraint/objective", i);
      check_finite(fm, "constraint/objective", i);
      for (Index c = 0; c < k; ++c) (*yy)[c](i, i) = (fp[c] - 2.0 * f0[c] + fm[c]) / (hi * hi);
      for (Index l = i + 1; l < m; ++l) {
        const double hl = second_step(u[l]);
        up[i] = u[i] + hi;
        up[l] = u[l] + hl;
        const Vector fpp = F(x, up);
        up[l] = u[l] - hl;
        const Vector fpm = F(x, up);
        up[i] = u[i] - hi;
        const Vector fmm = F(x, up);
        up[l] = u[l] + hl;
        const Vector fmp = F(x, up);
        up[i] = u[i];
        up[l] = u[l];
        for (Index c = 0; c < k; ++c) {
          const double v = (fpp[c] - fpm[c] - fmp[c] + fmm[c]) / (4.0 * hi * hl);
          (*yy)[c](i, l) = v;
          (*yy)[c](l, i) = v;
        }
      }
    }
  }
  if (xy) {
    xy->assign(k, Matrix::Zero(m, n));
    for (Index j = 0; j < n; ++j) {
      const double hj = second_step(x[j]);
      for (Index i = 0; i < m; ++i) {
        const double hi = second_step(u[i]);
        xp[j] = x[j] + hj;
        up[i] = u[i] + hi;
        const Vector fpp = F(xp, up);
        up[i] = u[i] - hi;
        const Vector fpm = F(xp, up);
        xp[j] = x[j] - hj;
        const Vector fmm = F(xp, up);
        up[i] = u[i] + hi;
        const Vector fmp = F(xp, up);
        xp[j] = x[j];
        up[i] = u[i];
        check_finite(fpp, "constraint/objective", j);
        for (Index c = 0; c < k; ++c) {
          (*xy)[c](i, j) = (fpp[c] - fpm[c] - fmp[c] + fmm[c]) / (4.0 * hi * hj);
        }
      }
    }
  }
}

// Same blocks from an analytic Jacobian G : (x, u) -> k x m (rows are D_Y F_c).
void second_blocks_from_jacobian(const MatrixFn& G, Index k, const Vector& x, const Vector& u,
                                 std::vector<Matrix>* yy, std::vector<Matrix>* xy) {
  const Index m = u.size();
  const Index n = x.size();
  if (yy) {
    yy->assign(k, Matrix::Zero(m, m));
    Vector up = u;
    for (Index l = 0; l < m; ++l) {
      const double h = first_step(u[l]);
      up[l] = u[l] + h;
      const Matrix gp = G(x, up);
      up[l] = u[l] - h;
      const Matrix gm = G(x, up);
      up[l] = u[l];
      const Matrix d = (gp - gm) / (2.0 * h);
      check_finite(d.reshaped(), "derivative callback", l);
      for (Index c = 0; c < k; ++c) (*yy)[c].col(l) = d.row(c).transpose();
    }
    for (Matrix& b : *yy) b = 0.5 * (b + b.transpose()).eval();
  }
  if (xy) {
    xy->assign(k, Matrix::Zero(m, n));
    Vector xp = x;
    for (Index j = 0; j < n; ++j) {
      const double h = first_step(x[j]);
      xp[j] = x[j] + h;
      const Matrix gp = G(xp, u);
      xp[j] = x[j] - h;
      const Matrix gm = G(xp, u);
      xp[j] = x[j];
      const Matrix d = (gp - gm) / (2.0 * h);
      check_finite(d.reshaped(), "derivative callback", j);
      for (Index c = 0; c < k; ++c) (*xy)[c].col(j) = d.row(c).transpose();
    }
  }
}

VectorFn scalar_as_vector(const ScalarFn& f) {
  return [f](const Vector& x, const Vector& u) {
    Vector out(1);
    out[0] = f(x, u);
    return out;
  };
}

MatrixFn gradient_as_row(const VectorFn& fy) {
  return [fy](const Vector& x, const Vector& u) -> Matrix { return fy(x, u).transpose(); };
}

Matrix jacobian_wrt_u(const VectorFn& F, const Vector& x, const Vector& u) {
  return fd_jacobian([&](const Vector& v) { return F(x, v); }, u);
}

Matrix jacobian_wrt_x(const VectorFn& F, const Vector& x, const Vector& u) {
  return fd_jacobian([&](const Vector& v) { return F(v, u); }, x);
}

}  // namespace

double fd_step(const FdConfig& config, double xi) {
  if (config.step_rule == StepRule::Fixed) return config.fixed_step;
  return first_step(xi);
}

Matrix fd_jacobian(const VectorMap& fun, const Vector& x, const FdConfig& config) {
  const Vector f0 = fun(x);
  check_finite(f0, "function", -1);
  Matrix jac(f0.size(), x.size());
  Vector xp = x;
  for (Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(config, x[j]);
    if (config.scheme == FdScheme::Central) {
      xp[j] = x[j] + h;
      const Vector fp = fun(xp);
      xp[j] = x[j] - h;
      const Vector fm = fun(xp);
      check_finite(fp, "function", j);
      check_finite(fm, "function", j);
      jac.col(j) = (fp - fm) / (2.0 * h);
    } else {
      const double sh = config.forward_direction >= 0 ? h : -h;
      xp[j] = x[j] + sh;
      const Vector fp = fun(xp);
      check_finite(fp, "function", j);
      jac.col(j) = (fp - f0) / sh;
    }
    xp[j] = x[j];
  }
  return jac;
}

Vector fd_gradient(const std::function<double(const Vector&)>& fun, const Vector& x,
                   const FdConfig& config) {
  Matrix row = fd_jacobian(
      [&](const Vector& v) {
        Vector out(1);
        out[0] = fun(v);
        return out;
      },
      x, config);
  return row.row(0).transpose();
}

HessianBlocks fd_hessian_blocks(const DeclarativeProblem& problem, const Vector& x,
                                const Vector& y) {
  HessianBlocks blocks;
  const AnalyticDerivatives& d = problem.derivatives;
  std::vector<Matrix> yy, xy;
  if (d.f_y) {
    second_blocks_from_jacobian(gradient_as_row(d.f_y), 1, x, y, &yy, &xy);
  } else {
    second_blocks_from_values(scalar_as_vector(problem.objective), 1, x, y, &yy, &xy);
  }
  blocks.H_f = 0.5 * (yy[0] + yy[0].transpose());
  blocks.B_f = xy[0];

  auto constraint_blocks = [&](const VectorFn& F, const MatrixFn& FY, Index k,
                               std::vector<Matrix>* H, std::vector<Matrix>* B) {
    if (k == 0) return;
    if (FY) {
      second_blocks_from_jacobian(FY, k, x, y, H, B);
    } else {
      second_blocks_from_values(F, k, x, y, H, B);
    }
    for (Matrix& h : *H) h = 0.5 * (h + h.transpose()).eval();
  };
  constraint_blocks(problem.eq_constraints, d.h_y, problem.num_eq, &blocks.H_eq, &blocks.B_eq);
  constraint_blocks(problem.ineq_constraints, d.g_y, problem.num_ineq, &blocks.H_ineq,
                    &blocks.B_ineq);
  return blocks;
}

// ---------------------------------------------------------------------------

Vector ProblemDerivatives::f_y(const Vector& x, const Vector& u) const {
  if (problem_.derivatives.f_y) return problem_.derivatives.f_y(x, u);
  return fd_gradient([&](const Vector& v) { return problem_.objective(x, v); }, u);
}

Vector ProblemDerivatives::f_x(const Vector& x, const Vector& u) const {
  return fd_gradient([&](const Vector& v) { return problem_.objective(v, u); }, x);
}

Matrix ProblemDerivatives::f_yy(const Vector& x, const Vector& u) const {
  if (problem_.derivatives.f_yy) {
    const Matrix h = problem_.derivatives.f_yy(x, u);
    return 0.5 * (h + h.transpose());
  }
  std::vector<Matrix> yy;
  if (problem_.derivatives.f_y) {
    second_blocks_from_jacobian(gradient_as_row(problem_.derivatives.f_y), 1, x, u, &yy, nullptr);
  } else {
    second_blocks_from_values(scalar_as_vector(problem_.objective), 1, x, u, &yy, nullptr);
  }
  return 0.5 * (yy[0] + yy[0].transpose());
}

Matrix ProblemDerivatives::f_xy(const Vector& x, const Vector& u) const {
  if (problem_.derivatives.f_xy) return problem_.derivatives.f_xy(x, u);
  std::vector<Matrix> xy;
  if (problem_.derivatives.f_y) {
    second_blocks_from_jacobian(gradient_as_row(problem_.derivatives.f_y), 1, x, u, nullptr, &xy);
  } else {
    second_blocks_from_values(scalar_as_vector(problem_.objective), 1, x, u, nullptr, &xy);
  }
  return xy[0];
}

Vector ProblemDerivatives::h(const Vector& x, const Vector& u) const {
  if (!problem_.has_eq()) return Vector::Zero(0);
  return problem_.eq_constraints(x, u);
}

Matrix ProblemDerivatives::h_y(const Vector& x, const Vector& u) const {
  if (!problem_.has_eq()) return Matrix::Zero(0, u.size());
  if (problem_.derivatives.h_y) return problem_.derivatives.h_y(x, u);
  return jacobian_wrt_u(problem_.eq_constraints, x, u);
}

Matrix ProblemDerivatives::h_x(const Vector& x, const Vector& u) const {
  if (!problem_.has_eq()) return Matrix::Zero(0, x.size());
  if (problem_.derivatives.h_x) return problem_.derivatives.h_x(x, u);
  return jacobian_wrt_x(problem_.eq_constraints, x, u);
}

std::vector<Matrix> ProblemDerivatives::h_yy(const Vector& x, const Vector& u) const {
  if (!problem_.has_eq()) return {};
  if (problem_.derivatives.h_yy) return problem_.derivatives.h_yy(x, u);
  std::vector<Matrix> yy;
  if (problem_.derivatives.h_y) {
    second_blocks_from_jacobian(problem_.derivatives.h_y, problem_.num_eq, x, u, &yy, nullptr);
  } else {
    second_blocks_from_values(problem_.eq_constraints, problem_.num_eq, x, u, &yy, nullptr);
  }
  for (Matrix& b : yy) b = 0.5 * (b + b.transpose()).eval();
  return yy;
}

std::vector<Matrix> ProblemDerivatives::h_xy(const Vector& x, const Vector& u) const {
  if (!problem_.has_eq()) return {};
  if (problem_.derivatives.h_xy) return problem_.derivatives.h_xy(x, u);
  std::vector<Matrix> xy;
  if (problem_.derivatives.h_y) {
    second_blocks_from_jacobian(problem_.derivatives.h_y, problem_.num_eq, x, u, nullptr, &xy);
  } else {
    second_blocks_from_values(problem_.eq_constraints, problem_.num_eq, x, u, nullptr, &xy);
  }
  return xy;
}

Vector ProblemDerivatives::g(const Vector& x, const Vector& u) const {
  if (!problem_.has_ineq()) return Vector::Zero(0);
  return problem_.ineq_constraints(x, u);
}

Matrix ProblemDerivatives::g_y(const Vector& x, const Vector& u) const {
  if (!problem_.has_ineq()) return Matrix::Zero(0, u.size());
  if (problem_.derivatives.g_y) return problem_.derivatives.g_y(x, u);
  return jacobian_wrt_u(problem_.ineq_constraints, x, u);
}

Matrix ProblemDerivatives::g_x(const Vector& x, const Vector& u) const {
  if (!problem_.has_ineq()) return Matrix::Zero(0, x.size());
  if (problem_.derivatives.g_x) return problem_.derivatives.g_x(x, u);
  return jacobian_wrt_x(problem_.ineq_constraints, x, u);
}

std::vector<Matrix> ProblemDerivatives::g_yy(const Vector& x, const Vector& u) const {
  if (!problem_.has_ineq()) return {};
  if (problem_.derivatives.g_yy) return problem_.derivatives.g_yy(x, u);
  std::vector<Matrix> yy;
  if (problem_.derivatives.g_y) {
    second_blocks_from_jacobian(problem_.derivatives.g_y, problem_.num_ineq, x, u, &yy, nullptr);
  } else {
    second_blocks_from_values(problem_.ineq_constraints, problem_.num_ineq, x, u, &yy, nullptr);
  }
  for (Matrix& b : yy) b = 0.5 * (b + b.transpose()).eval();
  return yy;
}

std::vector<Matrix> ProblemDerivatives::g_xy(const Vector& x, const Vector& u) const {
  if (!problem_.has_ineq()) return {};
  if (problem_.derivatives.g_xy) return problem_.derivatives.g_xy(x, u);
  std::vector<Matrix> xy;
  if (problem_.derivatives.g_y) {
    second_blocks_from_jacobian(problem_.derivatives.g_y, problem_.num_ineq, x, u, nullptr, &xy);
  } else {
    second_blocks_from_values(problem_.ineq_constraints, problem_.num_ineq, x, u, nullptr, &xy);
  }
  return xy;
}

bool ProblemDerivatives::has_analytic_mixed() const {
  const AnalyticDerivatives& d = problem_.derivatives;
  if (!d.f_xy) return false;
  if (problem_.has_eq() && !(d.h_xy && d.h_x)) return false;
  if (problem_.has_ineq() && !(d.g_xy && d.g_x)) return false;
  return true;
}

void ProblemDerivatives::lagrangian_columns(const Vector& x, const Vector& u,
                                            const Vector& stacked_lambda,
                                            const std::vector<Index>& eq_rows,
                                            const std::vector<Index>& ineq_rows, Index j,
                                            Eigen::Ref<Vector> b_col,
                                            Eigen::Ref<Vector> c_col) const {
  const Index m = u.size();
  const Index pe = static_cast<Index>(eq_rows.size());
  const Index k = pe + static_cast<Index>(ineq_rows.size());
  const AnalyticDerivatives& d = problem_.derivatives;

  auto pick = [](const Vector& full, const std::vector<Index>& rows, Eigen::Ref<Vector> out) {
    for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Index>(r)] = full[rows[r]];
  };
  auto stacked_values = [&](const Vector& xv, const Vector& uv, Eigen::Ref<Vector> out) {
    if (pe > 0) pick(problem_.eq_constraints(xv, uv), eq_rows, out.head(pe));
    if (k > pe) pick(problem_.ineq_constraints(xv, uv), ineq_rows, out.tail(k - pe));
  };
  // Accumulates -sum_r lambda_r * M_r.col(j) over the selected blocks.
  auto subtract_blocks = [&](const std::vector<Matrix>& blocks, const std::vector<Index>& rows,
                             Index offset) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double lam = stacked_lambda[offset + static_cast<Index>(r)];
      if (lam != 0.0) b_col -= lam * blocks[rows[r]].col(j);
    }
  };

  const bool lambda_zero = k == 0 || stacked_lambda.cwiseAbs().maxCoeff() == 0.0;

  if (has_analytic_mixed()) {
    b_col = d.f_xy(x, u).col(j);
    if (!lambda_zero) {
      if (pe > 0) subtract_blocks(d.h_xy(x, u), eq_rows, 0);
      if (k > pe) subtract_blocks(d.g_xy(x, u), ineq_rows, pe);
    }
    if (pe > 0) {
      const Matrix hx = d.h_x(x, u);
      for (Index r = 0; r < pe; ++r) c_col[r] = hx(eq_rows[r], j);
    }
    if (k > pe) {
      const Matrix gx = d.g_x(x, u);
      for (Index r = pe; r < k; ++r) c_col[r] = gx(ineq_rows[r - pe], j);
    }
    return;
  }

  Vector xp = x;
  const bool analytic_first = d.f_y && (pe == 0 || d.h_y) && (k == pe || d.g_y);
  if (analytic_first) {
    auto lagrangian_grad = [&](const Vector& xv) {
      Vector gl = d.f_y(xv, u);
      if (!lambda_zero) {
        if (pe > 0) {
          const Matrix hy = d.h_y(xv, u);
          for (Index r = 0; r < pe; ++r) gl -= stacked_lambda[r] * hy.row(eq_rows[r]).transpose();
        }
        if (k > pe) {
          const Matrix gy = d.g_y(xv, u);
          for (Index r = pe; r < k; ++r) {
            gl -= stacked_lambda[r] * gy.row(ineq_rows[r - pe]).transpose();
          }
        }
      }
      return gl;
    };
    const double h = first_step(x[j]);
    xp[j] = x[j] + h;
    b_col = lagrangian_grad(xp);
    xp[j] = x[j] - h;
    b_col -= lagrangian_grad(xp);
    b_col /= 2.0 * h;
  } else {
    Vector scratch(k);
    auto lagrangian = [&](const Vector& xv, const Vector& uv) {
      double v = problem_.objective(xv, uv);
      if (!lambda_zero) {
        stacked_values(xv, uv, scratch);
        v -= stacked_lambda.dot(scratch);
      }
      return v;
    };
    Vector up = u;
    const double hj = second_step(x[j]);
    for (Index i = 0; i < m; ++i) {
      const double hi = second_step(u[i]);
      xp[j] = x[j] + hj;
      up[i] = u[i] + hi;
      const double fpp = lagrangian(xp, up);
      up[i] = u[i] - hi;
      const double fpm = lagrangian(xp, up);
      xp[j] = x[j] - hj;
      const double fmm = lagrangian(xp, up);
      up[i] = u[i] + hi;
      const double fmp = lagrangian(xp, up);
      up[i] = u[i];
      b_col[i] = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  }
  xp[j] = x[j];
  if (!b_col.allFinite()) {
    throw NodeError(ErrorKind::UndefinedGradient,
                    "non-finite mixed derivative in column " + std::to_string(j));
  }

  if (k > 0) {
    if ((pe == 0 || d.h_x) && (k == pe || d.g_x)) {
      if (pe > 0) {
        const Matrix hx = d.h_x(x, u);
        for (Index r = 0; r < pe; ++r) c_col[r] = hx(eq_rows[r], j);
      }
      if (k > pe) {
        const Matrix gx = d.g_x(x, u);
        for (Index r = pe; r < k; ++r) c_col[r] = gx(ineq_rows[r - pe], j);
      }
      return;
    }
    Vector tmp(k);
    const double h = first_step(x[j]);
    xp[j] = x[j] + h;
    stacked_values(xp, u, c_col);
    xp[j] = x[j] - h;
    stacked_values(xp, u, tmp);
    c_col -= tmp;
    c_col /= 2.0 * h;
  }
}

KktResiduals kkt_residuals(const DeclarativeProblem& problem, const Vector& x,
                           const Solution& solution) {
  ProblemDerivatives d(problem);
  const Vector& y = solution.y;
  const Index p = problem.num_eq;
  const Index q = problem.num_ineq;
  KktResiduals r;
  Vector grad = d.f_y(x, y);
  if (p > 0) {
    grad -= d.h_y(x, y).transpose() * solution.multipliers.head(p);
    r.eq_violation = d.h(x, y).cwiseAbs().maxCoeff();
  }
  if (q > 0) {
    grad -= d.g_y(x, y).transpose() * solution.multipliers.segment(p, q);
    r.ineq_violation = std::max(0.0, d.g(x, y).maxCoeff());
    r.max_active_multiplier = solution.multipliers.segment(p, q).maxCoeff();
  }
  r.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

}  // namespace ddn
