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

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ddn {

const char* to_string(GradientPath path) noexcept {
  switch (path) {
    case GradientPath::Unconstrained: return "unconstrained";
    case GradientPath::PseudoInverse: return "pseudo-inverse";
    case GradientPath::Constrained: return "constrained";
    case GradientPath::Feasibility: return "feasibility";
  }
  return "unknown";
}

namespace {

std::string condition_text(double rcond) {
  std::ostringstream os;
  os.precision(3);
  if (rcond <= 0.0 || !std::isfinite(rcond)) {
    os << "inf";
  } else {
    os << 1.0 / rcond;
  }
  return os.str();
}

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

// Linear membership test on a short row list.
bool contains(const std::vector<Index>& rows, Index value) {
  return std::find(rows.begin(), rows.end(), value) != rows.end();
}

}  // namespace

Matrix pseudo_inverse(const Matrix& M, double rel_cutoff) {
  if (M.size() == 0) return Matrix::Zero(M.cols(), M.rows());
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s[0] : 0.0;
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    if (smax > 0.0 && s[i] > rel_cutoff * smax) inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

namespace {

Index numerical_rank(const Matrix& M, double rel_cutoff) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) r += s[i] > rel_cutoff * s[0] ? 1 : 0;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// GradientContext

void GradientContext::factor_hessian(const GradientOptions& options, bool allow_fallback) {
  const double min_rcond = 1.0 / options.max_condition;
  double rcond = 0.0;
  if (H_.size() > 0 && H_.cwiseAbs().maxCoeff() > 0.0) {
    llt_.compute(H_);
    if (llt_.info() == Eigen::Success) {
      rcond = llt_.rcond();
      if (rcond >= min_rcond) {
        factor_ = Factor::Llt;
        return;
      }
    }
    lu_.compute(H_);
    rcond = lu_.rcond();
    if (std::isfinite(rcond) && rcond >= min_rcond) {
      factor_ = Factor::Lu;
      return;
    }
  }
  if (!allow_fallback) {
    throw NodeError(ErrorKind::SingularHessian,
                    "H (" + shape_string(H_.rows(), H_.cols()) + ") has condition estimate " +
                        condition_text(rcond) + " > " + condition_text(min_rcond));
  }
  pinv_ = pseudo_inverse(H_, options.pinv_cutoff);
  factor_ = Factor::Pinv;
  fallback_ = true;
  path_ = GradientPath::PseudoInverse;
}

GradientContext GradientContext::unconstrained(Matrix H, Index input_dim, ColumnSource columns,
                                               const GradientOptions& options) {
  GradientContext ctx;
  ctx.path_ = GradientPath::Unconstrained;
  ctx.m_ = H.rows();
  ctx.n_ = input_dim;
  ctx.H_ = symmetrized(H);
  ctx.A_ = Matrix::Zero(0, ctx.m_);
  ctx.columns_ = std::move(columns);
  ctx.factor_hessian(options, options.allow_pseudo_inverse_fallback);
  return ctx;
}

GradientContext GradientContext::constrained(Matrix H, Matrix A, Index input_dim,
                                             ColumnSource columns,
                                             const GradientOptions& options) {
  if (A.rows() == 0) return unconstrained(std::move(H), input_dim, std::move(columns), options);
  if (A.cols() != H.rows()) {
    throw NodeError(ErrorKind::DimensionMismatch, "A is " + shape_string(A.rows(), A.cols()) +
                                                      " but H is " +
                                                      shape_string(H.rows(), H.cols()));
  }
  GradientContext ctx;
  ctx.path_ = GradientPath::Constrained;
  ctx.m_ = H.rows();
  ctx.n_ = input_dim;
  ctx.H_ = symmetrized(H);
  ctx.A_ = std::move(A);
  ctx.columns_ = std::move(columns);
  ctx.factor_hessian(options, false);
  ctx.hinv_at_ = ctx.solve_hessian(Matrix(ctx.A_.transpose()));
  const Matrix schur = symmetrized(ctx.A_ * ctx.hinv_at_);
  ctx.schur_lu_.compute(schur);
  const double rcond = ctx.schur_lu_.rcond();
  if (!std::isfinite(rcond) || rcond < 1.0 / options.max_condition) {
    throw NodeError(ErrorKind::RankDeficientConstraints,
                    "A H^-1 A^T (" + shape_string(schur.rows(), schur.cols()) +
                        ") has condition estimate " + condition_text(rcond));
  }
  return ctx;
}

GradientContext GradientContext::feasibility(Matrix A, Index input_dim, ColumnSource columns,
                                             const GradientOptions& options) {
  GradientContext ctx;
  ctx.path_ = GradientPath::Feasibility;
  ctx.m_ = A.cols();
  ctx.n_ = input_dim;
  ctx.A_ = std::move(A);
  ctx.columns_ = std::move(columns);
  const Index rank = numerical_rank(ctx.A_, options.pinv_cutoff);
  if (rank == 0) {
    throw NodeError(ErrorKind::RankDeficientConstraints,
                    "constraint Jacobian A (" + shape_string(ctx.A_.rows(), ctx.A_.cols()) +
                        ") is zero");
  }
  ctx.pinv_ = pseudo_inverse(ctx.A_, options.pinv_cutoff);
  ctx.factor_ = Factor::Pinv;
  ctx.fallback_ = rank < ctx.m_;
  return ctx;
}

Vector GradientContext::solve_hessian(const Vector& r) const {
  switch (factor_) {
    case Factor::Llt: return llt_.solve(r);
    case Factor::Lu: return lu_.solve(r);
    case Factor::Pinv: return pinv_ * r;
    case Factor::None: break;
  }
  throw NodeError(ErrorKind::SingularHessian, "no Hessian factorization on this path");
}

Matrix GradientContext::solve_hessian(const Matrix& r) const {
  switch (factor_) {
    case Factor::Llt: return llt_.solve(r);
    case Factor::Lu: return lu_.solve(r);
    case Factor::Pinv: return pinv_ * r;
    case Factor::None: break;
  }
  throw NodeError(ErrorKind::SingularHessian, "no Hessian factorization on this path");
}

Matrix GradientContext::B() const {
  Matrix B(m_, n_);
  Vector c(A_.rows());
  for (Index j = 0; j < n_; ++j) columns_(j, B.col(j), c);
  return B;
}

Matrix GradientContext::C() const {
  Matrix C(A_.rows(), n_);
  Vector b(m_);
  for (Index j = 0; j < n_; ++j) columns_(j, b, C.col(j));
  return C;
}

Jacobian GradientContext::jacobian() const {
  Jacobian jac;
  jac.one_sided = one_sided_;
  jac.rank_deficient_fallback = fallback_;
  const Index k = A_.rows();
  Matrix B(m_, n_);
  Matrix C(k, n_);
  for (Index j = 0; j < n_; ++j) columns_(j, B.col(j), C.col(j));
  switch (path_) {
    case GradientPath::Unconstrained:
    case GradientPath::PseudoInverse:
      jac.matrix = -solve_hessian(B);
      break;
    case GradientPath::Constrained: {
      const Matrix hinv_b = solve_hessian(B);
      jac.matrix = hinv_at_ * schur_lu_.solve(A_ * hinv_b - C) - hinv_b;
      break;
    }
    case GradientPath::Feasibility:
      jac.matrix = -pinv_ * C;
      break;
  }
  if (!jac.matrix.allFinite()) {
    throw NodeError(ErrorKind::UndefinedGradient,
                    "non-finite Jacobian entries on the " + std::string(to_string(path_)) + " path");
  }
  return jac;
}

void GradientContext::vjp_coefficients(const Vector& v, Vector& w_b, Vector& w_c) const {
  switch (path_) {
    case GradientPath::Unconstrained:
    case GradientPath::PseudoInverse:
      w_b = -solve_hessian(v);
      w_c.resize(0);
      return;
    case GradientPath::Constrained: {
      const Vector w = solve_hessian(v);
      const Vector r = schur_lu_.transpose().solve(A_ * w);
      w_b = hinv_at_ * r - w;
      w_c = -r;
      return;
    }
    case GradientPath::Feasibility:
      w_b = Vector::Zero(m_);
      w_c = -(pinv_.transpose() * v);
      return;
  }
}

Vector GradientContext::vjp(const Vector& v, VjpMode mode) const {
  if (v.size() != m_) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "vjp vector has " + std::to_string(v.size()) + " entries, expected " +
                        std::to_string(m_));
  }
  if (mode == VjpMode::Materialize) return jacobian().matrix.transpose() * v;

  Vector w_b, w_c;
  vjp_coefficients(v, w_b, w_c);
  Vector out(n_);
  Vector b(m_);
  Vector c(A_.rows());
  const bool need_b = path_ != GradientPath::Feasibility;
  for (Index j = 0; j < n_; ++j) {
    columns_(j, b, c);
    double acc = need_b ? w_b.dot(b) : 0.0;
    if (c.size() > 0) acc += w_c.dot(c);
    out[j] = acc;
  }
  return out;
}

Vector vjp(const Vector& v, const GradientContext& context, VjpMode mode) {
  return context.vjp(v, mode);
}

// ---------------------------------------------------------------------------
// Free functions

Vector recover_multipliers(const Matrix& A, const Vector& grad_f, double max_condition) {
  if (A.cols() != grad_f.size()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "A is " + shape_string(A.rows(), A.cols()) + " but D_Y f has " +
                        std::to_string(grad_f.size()) + " entries");
  }
  if (A.rows() == 0) return Vector::Zero(0);
  const Matrix aat = A * A.transpose();
  Eigen::LLT<Matrix> llt(aat);
  double rcond = 0.0;
  if (llt.info() == Eigen::Success) rcond = llt.rcond();
  if (!(rcond >= 1.0 / max_condition)) {
    throw NodeError(ErrorKind::RankDeficientConstraints,
                    "A A^T (" + shape_string(aat.rows(), aat.cols()) + ") has condition estimate " +
                        condition_text(rcond));
  }
  return llt.solve(A * grad_f);
}

std::vector<Index> independent_rows(const Matrix& A, double rel_tol) {
  std::vector<Index> kept;
  if (A.rows() == 0) return kept;
  Eigen::ColPivHouseholderQR<Matrix> qr(A.transpose());
  const Matrix& R = qr.matrixQR();
  const Index diag = std::min(R.rows(), R.cols());
  if (diag == 0) return kept;
  const double largest = std::abs(R(0, 0));
  if (largest == 0.0) return kept;
  const auto& perm = qr.colsPermutation().indices();
  for (Index i = 0; i < diag; ++i) {
    if (std::abs(R(i, i)) >= rel_tol * largest) kept.push_back(perm[i]);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<Index> active_inequalities(const DeclarativeProblem& problem, const Vector& x,
                                       const Vector& y, double active_tol) {
  std::vector<Index> rows;
  if (!problem.has_ineq()) return rows;
  const Vector g = problem.ineq_constraints(x, y);
  for (Index i = 0; i < g.size(); ++i) {
    if (g[i] >= -active_tol) rows.push_back(i);
  }
  return rows;
}

namespace {

void check_point(const DeclarativeProblem& problem, const Vector& x, const Vector& y) {
  if (x.size() != problem.input_dim || y.size() != problem.output_dim) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "point has x:" + std::to_string(x.size()) + " y:" + std::to_string(y.size()) +
                        ", problem declares n=" + std::to_string(problem.input_dim) +
                        " m=" + std::to_string(problem.output_dim));
  }
}

ColumnSource make_columns(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                          const Vector& lambda, std::vector<Index> eq_rows,
                          std::vector<Index> ineq_rows) {
  ProblemDerivatives d(problem);
  return [d, x, y, lambda, eq_rows = std::move(eq_rows), ineq_rows = std::move(ineq_rows)](
             Index j, Eigen::Ref<Vector> b, Eigen::Ref<Vector> c) {
    d.lagrangian_columns(x, y, lambda, eq_rows, ineq_rows, j, b, c);
  };
}

// H = D_YY f - sum lambda_k D_YY h~_k over the stacked rows.
Matrix lagrangian_hessian(const ProblemDerivatives& d, const Vector& x, const Vector& y,
                          const Vector& lambda, const std::vector<Index>& eq_rows,
                          const std::vector<Index>& ineq_rows) {
  Matrix H = d.f_yy(x, y);
  const Index pe = static_cast<Index>(eq_rows.size());
  bool eq_nonzero = false;
  bool ineq_nonzero = false;
  for (Index r = 0; r < lambda.size(); ++r) {
    if (lambda[r] != 0.0) (r < pe ? eq_nonzero : ineq_nonzero) = true;
  }
  if (eq_nonzero) {
    const std::vector<Matrix> hyy = d.h_yy(x, y);
    for (Index r = 0; r < pe; ++r) H -= lambda[r] * hyy[eq_rows[r]];
  }
  if (ineq_nonzero) {
    const std::vector<Matrix> gyy = d.g_yy(x, y);
    for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
      H -= lambda[pe + static_cast<Index>(r)] * gyy[ineq_rows[r]];
    }
  }
  return H;
}

Matrix stacked_jacobian(const ProblemDerivatives& d, const Vector& x, const Vector& y,
                        const std::vector<Index>& eq_rows, const std::vector<Index>& ineq_rows) {
  const Index m = y.size();
  const Index pe = static_cast<Index>(eq_rows.size());
  Matrix A(pe + static_cast<Index>(ineq_rows.size()), m);
  if (pe > 0) {
    const Matrix hy = d.h_y(x, y);
    for (Index r = 0; r < pe; ++r) A.row(r) = hy.row(eq_rows[r]);
  }
  if (!ineq_rows.empty()) {
    const Matrix gy = d.g_y(x, y);
    for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
      A.row(pe + static_cast<Index>(r)) = gy.row(ineq_rows[r]);
    }
  }
  return A;
}

std::vector<Index> iota(Index count) {
  std::vector<Index> v(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

GradientContext build_context(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                              const std::optional<Vector>& multipliers, bool use_ineq,
                              const GradientOptions& options) {
  check_point(problem, x, y);
  const Index p = problem.num_eq;
  const Index q = problem.num_ineq;
  const Index m = problem.output_dim;
  const Index n = problem.input_dim;
  ProblemDerivatives d(problem);

  if (multipliers && multipliers->size() != p + q && multipliers->size() != p) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "multiplier vector has " + std::to_string(multipliers->size()) +
                        " entries, expected " + std::to_string(p + q));
  }

  std::vector<Index> eq_rows = iota(p);
  std::vector<Index> ineq_rows;
  if (use_ineq) ineq_rows = active_inequalities(problem, x, y, options.active_tol);

  // Rank repair: drop linearly dependent rows, their multipliers become 0.
  const Matrix A_full = stacked_jacobian(d, x, y, eq_rows, ineq_rows);
  if (A_full.rows() > 0) {
    const std::vector<Index> keep = independent_rows(A_full, options.rank_drop_tol);
    if (keep.empty()) {
      throw NodeError(ErrorKind::RankDeficientConstraints,
                      "active constraint Jacobian (" + shape_string(A_full.rows(), A_full.cols()) +
                          ") is zero at the solution");
    }
    std::vector<Index> eq_keep, ineq_keep;
    for (Index r : keep) {
      if (r < p) {
        eq_keep.push_back(eq_rows[r]);
      } else {
        ineq_keep.push_back(ineq_rows[r - p]);
      }
    }
    eq_rows = std::move(eq_keep);
    ineq_rows = std::move(ineq_keep);
  }

  auto lambda_for = [&](const std::vector<Index>& er, const std::vector<Index>& ir) {
    const Index k = static_cast<Index>(er.size() + ir.size());
    Vector lam(k);
    if (multipliers) {
      for (std::size_t r = 0; r < er.size(); ++r) lam[static_cast<Index>(r)] = (*multipliers)[er[r]];
      for (std::size_t r = 0; r < ir.size(); ++r) {
        const Index src = p + ir[r];
        lam[static_cast<Index>(er.size() + r)] = src < multipliers->size() ? (*multipliers)[src] : 0.0;
      }
      return lam;
    }
    return recover_multipliers(stacked_jacobian(d, x, y, er, ir), d.f_y(x, y),
                               options.max_condition);
  };

  Vector lambda = lambda_for(eq_rows, ineq_rows);

  // Active inequalities with a zero multiplier: the derivative is one-sided.
  bool one_sided = false;
  std::vector<Index> zero_rows;
  for (std::size_t r = 0; r < ineq_rows.size(); ++r) {
    if (std::abs(lambda[static_cast<Index>(eq_rows.size() + r)]) <= options.zero_multiplier_tol) {
      zero_rows.push_back(ineq_rows[r]);
    }
  }
  if (!zero_rows.empty()) {
    one_sided = true;
    switch (options.zero_multiplier_rule) {
      case ZeroMultiplierRule::ConstrainedBranch:
        break;
      case ZeroMultiplierRule::UnconstrainedBranch: {
        std::vector<Index> remaining;
        for (Index r : ineq_rows) {
          if (!contains(zero_rows, r)) remaining.push_back(r);
        }
        ineq_rows = std::move(remaining);
        lambda = lambda_for(eq_rows, ineq_rows);
        break;
      }
      case ZeroMultiplierRule::Reject:
        throw NodeError(ErrorKind::UndefinedGradient,
                        std::to_string(zero_rows.size()) +
                            " active inequality constraint(s) with zero multiplier (first row " +
                            std::to_string(zero_rows.front()) + ")");
    }
  }

  const Index k = static_cast<Index>(eq_rows.size() + ineq_rows.size());
  const Matrix A = stacked_jacobian(d, x, y, eq_rows, ineq_rows);
  ColumnSource columns = make_columns(problem, x, y, lambda, eq_rows, ineq_rows);

  GradientContext ctx = [&] {
    if (k == 0) {
      return GradientContext::unconstrained(d.f_yy(x, y), n, std::move(columns), options);
    }
    if (k >= m) {
      // The constraints alone pin down Dy.
      return GradientContext::feasibility(A, n, std::move(columns), options);
    }
    Matrix H = lagrangian_hessian(d, x, y, lambda, eq_rows, ineq_rows);
    return GradientContext::constrained(std::move(H), A, n, std::move(columns), options);
  }();
  ctx.set_one_sided(one_sided);
  return ctx;
}

}  // namespace

GradientContext make_context(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                             const std::optional<Vector>& multipliers,
                             const GradientOptions& options) {
  return build_context(problem, x, y, multipliers, true, options);
}

Jacobian gradient_unconstrained(const DeclarativeProblem& problem, const Vector& x,
                                const Vector& y, const GradientOptions& options) {
  check_point(problem, x, y);
  ProblemDerivatives d(problem);
  ColumnSource columns = make_columns(problem, x, y, Vector::Zero(0), {}, {});
  return GradientContext::unconstrained(d.f_yy(x, y), problem.input_dim, std::move(columns),
                                        options)
      .jacobian();
}

Jacobian gradient_equality(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                           const std::optional<Vector>& multipliers,
                           const GradientOptions& options) {
  return build_context(problem, x, y, multipliers, false, options).jacobian();
}

Jacobian gradient_inequality(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                             const std::optional<Vector>& multipliers,
                             const GradientOptions& options) {
  return build_context(problem, x, y, multipliers, true, options).jacobian();
}

Jacobian gradient_feasibility(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                              const GradientOptions& options) {
  check_point(problem, x, y);
  ProblemDerivatives d(problem);
  std::vector<Index> eq_rows = iota(problem.num_eq);
  std::vector<Index> ineq_rows = active_inequalities(problem, x, y, options.active_tol);
  const Matrix A = stacked_jacobian(d, x, y, eq_rows, ineq_rows);
  const Vector lambda = Vector::Zero(A.rows());
  ColumnSource columns = make_columns(problem, x, y, lambda, eq_rows, ineq_rows);
  return GradientContext::feasibility(A, problem.input_dim, std::move(columns), options).jacobian();
}

Jacobian gradient_single_constraint(const DeclarativeProblem& problem, const Vector& x,
                                    const Vector& y, const GradientOptions& options) {
  check_point(problem, x, y);
  if (problem.num_eq != 1 || problem.has_ineq()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "single-constraint path needs p=1, q=0; got p=" +
                        std::to_string(problem.num_eq) + " q=" + std::to_string(problem.num_ineq));
  }
  ProblemDerivatives d(problem);
  const Vector a = d.h_y(x, y).row(0).transpose();
  Index i = 0;
  const double amax = a.cwiseAbs().maxCoeff(&i);
  if (amax == 0.0) {
    throw NodeError(ErrorKind::UndefinedGradient,
                    "D_Y h(y) vanishes (" + shape_string(1, a.size()) + " zero row)");
  }
  const Vector fy = d.f_y(x, y);
  const double lambda = fy[i] / a[i];
  const Matrix H = symmetrized(d.f_yy(x, y) - lambda * d.h_yy(x, y)[0]);
  const Matrix B = d.f_xy(x, y);

  Eigen::PartialPivLU<Matrix> lu(H);
  const double rcond = lu.rcond();
  if (!std::isfinite(rcond) || rcond < 1.0 / options.max_condition) {
    throw NodeError(ErrorKind::SingularHessian,
                    "H (" + shape_string(H.rows(), H.cols()) + ") has condition estimate " +
                        condition_text(rcond));
  }
  const Vector hinv_a = lu.solve(a);
  const Matrix hinv_b = lu.solve(B);
  Jacobian jac;
  jac.matrix = hinv_a * (hinv_a.transpose() * B) / a.dot(hinv_a) - hinv_b;
  return jac;
}

Jacobian gradient_linear_equality(const DeclarativeProblem& problem, const Vector& x,
                                  const Vector& y, const Matrix& A,
                                  const GradientOptions& options) {
  check_point(problem, x, y);
  if (A.cols() != problem.output_dim) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "A is " + shape_string(A.rows(), A.cols()) + ", expected p x " +
                        std::to_string(problem.output_dim));
  }
  if (static_cast<Index>(independent_rows(A, options.rank_drop_tol).size()) != A.rows()) {
    throw NodeError(ErrorKind::RankDeficientConstraints,
                    "A (" + shape_string(A.rows(), A.cols()) + ") is not full row rank");
  }
  ProblemDerivatives d(problem);
  const Matrix H = d.f_yy(x, y);
  const Matrix B = d.f_xy(x, y);
  Eigen::PartialPivLU<Matrix> lu(H);
  const double rcond = lu.rcond();
  if (!std::isfinite(rcond) || rcond < 1.0 / options.max_condition) {
    throw NodeError(ErrorKind::SingularHessian,
                    "H (" + shape_string(H.rows(), H.cols()) + ") has condition estimate " +
                        condition_text(rcond));
  }
  const Matrix hinv_at = lu.solve(Matrix(A.transpose()));
  const Matrix hinv_b = lu.solve(B);
  const Matrix schur = A * hinv_at;
  Jacobian jac;
  jac.matrix = hinv_at * schur.partialPivLu().solve(A * hinv_b) - hinv_b;
  return jac;
}

Jacobian pseudo_inverse_descent(const DeclarativeProblem& problem, const Vector& x,
                                const Vector& y, const GradientOptions& options) {
  check_point(problem, x, y);
  ProblemDerivatives d(problem);
  const Matrix H = symmetrized(d.f_yy(x, y));
  Jacobian jac;
  jac.matrix = -pseudo_inverse(H, options.pinv_cutoff) * d.f_xy(x, y);
  jac.rank_deficient_fallback = true;
  return jac;
}

Jacobian gradient(const DeclarativeProblem& problem, const Vector& x, const Solution& solution,
                  const GradientOptions& options) {
  if (!problem.has_eq() && !problem.has_ineq()) {
    return gradient_unconstrained(problem, x, solution.y, options);
  }
  std::optional<Vector> lambda;
  if (solution.multipliers.size() == problem.num_eq + problem.num_ineq) {
    lambda = solution.multipliers;
  }
  return make_context(problem, x, solution.y, lambda, options).jacobian();
}

}  // namespace ddn
