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

#include "ddn/core.hpp"

#include <cstdio>
#include <sstream>

namespace ddn {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InfeasibleProblem: return "InfeasibleProblem";
    case ErrorKind::SolverDiverged: return "SolverDiverged";
    case ErrorKind::SingularHessian: return "SingularHessian";
    case ErrorKind::RankDeficientConstraints: return "RankDeficientConstraints";
    case ErrorKind::UndefinedGradient: return "UndefinedGradient";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
  }
  return "Unknown";
}

NodeError::NodeError(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
      kind_(kind),
      detail_(detail) {}

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

void expect_shape(const char* what, Index rows, Index cols, Index want_rows, Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    std::string(what) + " has shape " + shape_string(rows, cols) +
                        ", expected " + shape_string(want_rows, want_cols));
  }
}

void expect_blocks(const char* what, const std::vector<Matrix>& blocks, Index count, Index rows,
                   Index cols) {
  if (static_cast<Index>(blocks.size()) != count) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    std::string(what) + " returned " + std::to_string(blocks.size()) +
                        " blocks, expected " + std::to_string(count));
  }
  for (const Matrix& b : blocks) expect_shape(what, b.rows(), b.cols(), rows, cols);
}

}  // namespace

void validate_problem(const DeclarativeProblem& problem, const std::optional<Vector>& x_probe,
                      const std::optional<Vector>& u_probe) {
  const Index n = problem.input_dim;
  const Index m = problem.output_dim;
  const Index p = problem.num_eq;
  const Index q = problem.num_ineq;
  if (n <= 0 || m <= 0) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "input/output dimensions must be positive, got n=" + std::to_string(n) +
                        " m=" + std::to_string(m));
  }
  if (!problem.objective) {
    throw NodeError(ErrorKind::DimensionMismatch, "objective callback is missing");
  }
  if (p < 0 || q < 0) {
    throw NodeError(ErrorKind::DimensionMismatch, "negative constraint count");
  }
  if (p > m) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "equality system over-determined: p=" + std::to_string(p) +
                        " > m=" + std::to_string(m));
  }
  if ((p > 0) != static_cast<bool>(problem.eq_constraints) ||
      (q > 0) != static_cast<bool>(problem.ineq_constraints)) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "constraint callbacks disagree with declared counts p=" + std::to_string(p) +
                        " q=" + std::to_string(q));
  }

  const Vector x = x_probe.value_or(Vector::Zero(n));
  const Vector u = u_probe.value_or(Vector::Zero(m));
  expect_shape("probe x", x.size(), 1, n, 1);
  expect_shape("probe u", u.size(), 1, m, 1);

  (void)problem.objective(x, u);
  if (p > 0) expect_shape("h(x,u)", problem.eq_constraints(x, u).size(), 1, p, 1);
  if (q > 0) expect_shape("g(x,u)", problem.ineq_constraints(x, u).size(), 1, q, 1);

  const AnalyticDerivatives& d = problem.derivatives;
  if (d.f_y) expect_shape("D_Y f", d.f_y(x, u).size(), 1, m, 1);
  if (d.f_yy) {
    const Matrix v = d.f_yy(x, u);
    expect_shape("D_YY f", v.rows(), v.cols(), m, m);
  }
  if (d.f_xy) {
    const Matrix v = d.f_xy(x, u);
    expect_shape("D_XY f", v.rows(), v.cols(), m, n);
  }
  if (p > 0) {
    if (d.h_y) {
      const Matrix v = d.h_y(x, u);
      expect_shape("D_Y h", v.rows(), v.cols(), p, m);
    }
    if (d.h_x) {
      const Matrix v = d.h_x(x, u);
      expect_shape("D_X h", v.rows(), v.cols(), p, n);
    }
    if (d.h_yy) expect_blocks("D_YY h", d.h_yy(x, u), p, m, m);
    if (d.h_xy) expect_blocks("D_XY h", d.h_xy(x, u), p, m, n);
  }
  if (q > 0) {
    if (d.g_y) {
      const Matrix v = d.g_y(x, u);
      expect_shape("D_Y g", v.rows(), v.cols(), q, m);
    }
    if (d.g_x) {
      const Matrix v = d.g_x(x, u);
      expect_shape("D_X g", v.rows(), v.cols(), q, n);
    }
    if (d.g_yy) expect_blocks("D_YY g", d.g_yy(x, u), q, m, m);
    if (d.g_xy) expect_blocks("D_XY g", d.g_xy(x, u), q, m, n);
  }
}

}  // namespace ddn
