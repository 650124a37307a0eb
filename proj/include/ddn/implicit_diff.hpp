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

#include <functional>
#include <optional>
#include <vector>

namespace ddn {

/// What to do at an active inequality whose multiplier is zero, where the
/// derivative only exists one-sidedly.
enum class ZeroMultiplierRule {
  ConstrainedBranch,    // keep the row, flag one_sided
  UnconstrainedBranch,  // drop the row, flag one_sided
  Reject,               // throw UndefinedGradient
};

enum class VjpMode { Materialize, StreamColumns };

struct GradientOptions {
  double active_tol = 1e-8;           // g_i active iff g_i >= -active_tol
  double zero_multiplier_tol = 1e-8;
  double max_condition = 1e12;
  double rank_drop_tol = 1e-10;       // relative pivot threshold for rank repair
  double pinv_cutoff = 1e-10;         // relative singular value cutoff
  bool allow_pseudo_inverse_fallback = true;
  ZeroMultiplierRule zero_multiplier_rule = ZeroMultiplierRule::ConstrainedBranch;
};

enum class GradientPath { Unconstrained, PseudoInverse, Constrained, Feasibility };

const char* to_string(GradientPath path) noexcept;

/// Produces column j of B (m entries) and of C (k entries, k may be 0).
using ColumnSource = std::function<void(Index j, Eigen::Ref<Vector> b, Eigen::Ref<Vector> c)>;

/// Everything the backward pass needs at one solution: the Lagrangian
/// Hessian H (factored once), the repaired active constraint Jacobian A, and
/// a generator for the columns of B = D_XY L and C = D_X h~. B and C are never
/// stored; `jacobian()` materializes them, `vjp(..., StreamColumns)` does not.
///
/// Read-only after construction. A context built by `make_context` refers to
/// the problem it was built from, which must outlive it.
class GradientContext {
 public:
  static GradientContext unconstrained(Matrix H, Index input_dim, ColumnSource columns,
                                       const GradientOptions& options = {});
  static GradientContext constrained(Matrix H, Matrix A, Index input_dim, ColumnSource columns,
                                     const GradientOptions& options = {});
  static GradientContext feasibility(Matrix A, Index input_dim, ColumnSource columns,
                                     const GradientOptions& options = {});

  GradientPath path() const { return path_; }
  Index output_dim() const { return m_; }
  Index input_dim() const { return n_; }
  Index constraint_rows() const { return A_.rows(); }

  const Matrix& H() const { return H_; }
  const Matrix& A() const { return A_; }
  Matrix B() const;
  Matrix C() const;

  bool one_sided() const { return one_sided_; }
  bool rank_deficient_fallback() const { return fallback_; }
  void set_one_sided(bool v) { one_sided_ = v; }

  /// Dy(x) as an m x n matrix.
  Jacobian jacobian() const;

  /// v^T Dy(x). StreamColumns keeps O(m + k) state plus whatever a single
  /// column evaluation needs.
  Vector vjp(const Vector& v, VjpMode mode = VjpMode::StreamColumns) const;

  /// Solves H z = r with the cached factorization (pseudo-inverse on the
  /// fallback path).
  Vector solve_hessian(const Vector& r) const;
  Matrix solve_hessian(const Matrix& r) const;

 private:
  GradientContext() = default;
  void factor_hessian(const GradientOptions& options, bool allow_fallback);
  // Coefficients (w_b, w_c) such that (v^T Dy)_j = w_b . b_j + w_c . c_j.
  void vjp_coefficients(const Vector& v, Vector& w_b, Vector& w_c) const;

  GradientPath path_ = GradientPath::Unconstrained;
  Index m_ = 0;
  Index n_ = 0;
  Matrix H_;
  Matrix A_;
  ColumnSource columns_;
  bool one_sided_ = false;
  bool fallback_ = false;

  enum class Factor { None, Llt, Lu, Pinv };
  Factor factor_ = Factor::None;
  Eigen::LLT<Matrix> llt_;
  Eigen::PartialPivLU<Matrix> lu_;
  Matrix pinv_;                 // H^+ or A^+ depending on the path
  Matrix hinv_at_;              // H^-1 A^T
  Eigen::PartialPivLU<Matrix> schur_lu_;  // A H^-1 A^T
};

/// Multipliers solving lambda^T A = grad_f in the least-squares sense:
/// lambda = (A A^T)^-1 A grad_f. Throws RankDeficientConstraints when the
/// condition estimate of A A^T exceeds `max_condition`.
Vector recover_multipliers(const Matrix& A, const Vector& grad_f, double max_condition = 1e12);

/// Rows of A kept by pivoted QR; rows whose pivot falls below
/// `rel_tol * largest pivot` are linearly dependent and dropped.
std::vector<Index> independent_rows(const Matrix& A, double rel_tol = 1e-10);

/// Inequality rows considered active at (x, y).
std::vector<Index> active_inequalities(const DeclarativeProblem& problem, const Vector& x,
                                       const Vector& y, double active_tol = 1e-8);

/// Builds the backward context for any problem class. `multipliers`, if
/// given, holds p + q entries; otherwise they are recovered from D_Y f.
GradientContext make_context(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                             const std::optional<Vector>& multipliers = std::nullopt,
                             const GradientOptions& options = {});

/// -H^-1 B. Falls back to `pseudo_inverse_descent` when H is singular and
/// the fallback is enabled, otherwise throws SingularHessian.
Jacobian gradient_unconstrained(const DeclarativeProblem& problem, const Vector& x,
                                const Vector& y, const GradientOptions& options = {});

/// H^-1 A^T (A H^-1 A^T)^-1 (A H^-1 B - C) - H^-1 B over the equality rows.
Jacobian gradient_equality(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                           const std::optional<Vector>& multipliers = std::nullopt,
                           const GradientOptions& options = {});

/// Equality rows plus active inequality rows; inactive rows are dropped.
Jacobian gradient_inequality(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                             const std::optional<Vector>& multipliers = std::nullopt,
                             const GradientOptions& options = {});

/// Solves A Dy = -C for a problem with no objective curvature.
Jacobian gradient_feasibility(const DeclarativeProblem& problem, const Vector& x, const Vector& y,
                              const GradientOptions& options = {});

/// Single x-independent equality constraint:
/// (H^-1 a a^T H^-1 / a^T H^-1 a - H^-1) B.
Jacobian gradient_single_constraint(const DeclarativeProblem& problem, const Vector& x,
                                    const Vector& y, const GradientOptions& options = {});

/// Fixed linear constraints A u = d:
/// (H^-1 A^T (A H^-1 A^T)^-1 A H^-1 - H^-1) B.
Jacobian gradient_linear_equality(const DeclarativeProblem& problem, const Vector& x,
                                  const Vector& y, const Matrix& A,
                                  const GradientOptions& options = {});

/// -H^+ B with singular values below `pinv_cutoff * sigma_max` discarded.
Jacobian pseudo_inverse_descent(const DeclarativeProblem& problem, const Vector& x,
                                const Vector& y, const GradientOptions& options = {});

/// Dispatches on the problem class.
Jacobian gradient(const DeclarativeProblem& problem, const Vector& x, const Solution& solution,
                  const GradientOptions& options = {});

Vector vjp(const Vector& v, const GradientContext& context, VjpMode mode);

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
Matrix pseudo_inverse(const Matrix& M, double rel_cutoff = 1e-10);

}  // namespace ddn
