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

#include "ddn/ddn.h"

#include "ddn/harness.hpp"
#include "ddn/implicit_diff.hpp"
#include "ddn/solve.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

struct ddn_report {
  ddn::Report report;
};

struct ddn_problem {
  std::size_t n = 0;
  std::size_t m = 0;
  void* user = nullptr;
  ddn_objective_fn objective = nullptr;
  ddn_vector_fn grad_u = nullptr;
  std::size_t p = 0;
  ddn_vector_fn h = nullptr;
  std::size_t q = 0;
  ddn_vector_fn g = nullptr;
};

namespace {

thread_local std::string last_error;

ddn_status fail(ddn_status status, const std::string& message) {
  last_error = message;
  return status;
}

ddn_status status_of(ddn::ErrorKind kind) {
  switch (kind) {
    case ddn::ErrorKind::InfeasibleProblem: return DDN_INFEASIBLE;
    case ddn::ErrorKind::SolverDiverged: return DDN_SOLVER_DIVERGED;
    case ddn::ErrorKind::SingularHessian: return DDN_SINGULAR_HESSIAN;
    case ddn::ErrorKind::RankDeficientConstraints: return DDN_RANK_DEFICIENT;
    case ddn::ErrorKind::UndefinedGradient: return DDN_UNDEFINED_GRADIENT;
    case ddn::ErrorKind::DimensionMismatch: return DDN_DIMENSION_MISMATCH;
  }
  return DDN_INTERNAL;
}

template <typename F>
ddn_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return DDN_OK;
  } catch (const ddn::UsageError& e) {
    return fail(DDN_INVALID_ARGUMENT, e.what());
  } catch (const ddn::NodeError& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DDN_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DDN_INTERNAL, e.what());
  } catch (...) {
    return fail(DDN_INTERNAL, "unknown exception");
  }
}

ddn_status store(ddn::Report report, ddn_report** out) {
  *out = new ddn_report{std::move(report)};
  return DDN_OK;
}

ddn::Vector to_vector(const double* values, std::size_t n) {
  ddn::Vector v(static_cast<ddn::Index>(n));
  if (n > 0) std::memcpy(v.data(), values, n * sizeof(double));
  return v;
}

void copy_out(const ddn::Vector& v, double* out) {
  if (v.size() > 0) std::memcpy(out, v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

ddn::VectorFn wrap_vector(const ddn_problem& p, ddn_vector_fn fn, std::size_t rows) {
  const std::size_t n = p.n;
  const std::size_t m = p.m;
  void* user = p.user;
  return [fn, rows, n, m, user](const ddn::Vector& x, const ddn::Vector& u) {
    ddn::Vector out = ddn::Vector::Zero(static_cast<ddn::Index>(rows));
    fn(x.data(), n, u.data(), m, out.data(), user);
    return out;
  };
}

ddn::DeclarativeProblem to_problem(const ddn_problem& p) {
  ddn::DeclarativeProblem dp;
  dp.input_dim = static_cast<ddn::Index>(p.n);
  dp.output_dim = static_cast<ddn::Index>(p.m);
  const auto objective = p.objective;
  const std::size_t n = p.n;
  const std::size_t m = p.m;
  void* user = p.user;
  dp.objective = [objective, n, m, user](const ddn::Vector& x, const ddn::Vector& u) {
    return objective(x.data(), n, u.data(), m, user);
  };
  if (p.grad_u) dp.derivatives.f_y = wrap_vector(p, p.grad_u, p.m);
  if (p.h) {
    dp.num_eq = static_cast<ddn::Index>(p.p);
    dp.eq_constraints = wrap_vector(p, p.h, p.p);
  }
  if (p.g) {
    dp.num_ineq = static_cast<ddn::Index>(p.q);
    dp.ineq_constraints = wrap_vector(p, p.g, p.q);
  }
  return dp;
}

std::optional<ddn::Vector> multipliers_of(const ddn_problem& p, const double* lambda) {
  if (!lambda) return std::nullopt;
  return to_vector(lambda, p.p + p.q);
}

}  // namespace

extern "C" {

const char* ddn_version(void) { return "0.1.0"; }

const char* ddn_status_name(ddn_status status) {
  switch (status) {
    case DDN_OK: return "ok";
    case DDN_INVALID_ARGUMENT: return "invalid-argument";
    case DDN_INFEASIBLE: return "infeasible";
    case DDN_SOLVER_DIVERGED: return "solver-diverged";
    case DDN_SINGULAR_HESSIAN: return "singular-hessian";
    case DDN_RANK_DEFICIENT: return "rank-deficient";
    case DDN_UNDEFINED_GRADIENT: return "undefined-gradient";
    case DDN_DIMENSION_MISMATCH: return "dimension-mismatch";
    case DDN_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ddn_last_error(void) { return last_error.c_str(); }

void ddn_string_free(char* s) { std::free(s); }

void ddn_report_free(ddn_report* report) { delete report; }

ddn_status ddn_report_render(const ddn_report* report, const char* format, char** out) {
  if (!report || !format || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  ddn::ReportFormat f;
  if (!ddn::parse_format(format, f)) {
    return fail(DDN_INVALID_ARGUMENT, std::string("unknown format '") + format + "'");
  }
  return guarded([&] {
    const std::string text = ddn::render(report->report, f);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (!buf) throw std::bad_alloc();
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

int ddn_report_passed(const ddn_report* report) { return report && report->report.passed ? 1 : 0; }

size_t ddn_report_row_count(const ddn_report* report) {
  return report ? report->report.rows.size() : 0;
}

size_t ddn_report_column_count(const ddn_report* report) {
  return report ? report->report.columns.size() : 0;
}

const char* ddn_report_column_name(const ddn_report* report, size_t col) {
  if (!report || col >= report->report.columns.size()) return nullptr;
  return report->report.columns[col].c_str();
}

ddn_status ddn_report_number(const ddn_report* report, size_t row, const char* column,
                             double* out) {
  if (!report || !column || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  const ddn::Report& r = report->report;
  if (row >= r.rows.size()) {
    return fail(DDN_INVALID_ARGUMENT, "row " + std::to_string(row) + " out of range (" +
                                          std::to_string(r.rows.size()) + " rows)");
  }
  for (std::size_t c = 0; c < r.columns.size(); ++c) {
    if (r.columns[c] != column) continue;
    const ddn::Cell& cell = r.rows[row][c];
    if (const auto* b = std::get_if<bool>(&cell)) {
      *out = *b ? 1.0 : 0.0;
    } else if (const auto* i = std::get_if<std::int64_t>(&cell)) {
      *out = static_cast<double>(*i);
    } else if (const auto* d = std::get_if<double>(&cell)) {
      *out = *d;
    } else {
      return fail(DDN_INVALID_ARGUMENT, std::string("column '") + column + "' is not numeric");
    }
    last_error.clear();
    return DDN_OK;
  }
  return fail(DDN_INVALID_ARGUMENT, std::string("no column '") + column + "'");
}

ddn_status ddn_gradcheck(const char* node, int trials, uint64_t seed, double tolerance,
                         ddn_report** out) {
  if (!node || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    std::optional<double> tol;
    if (tolerance > 0.0) tol = tolerance;
    store(ddn::cmd_gradcheck(node, trials, seed, tol), out);
  });
}

ddn_status ddn_pool(const double* values, size_t n, const char* penalty, double alpha,
                    uint64_t seed, ddn_report** out) {
  if ((!values && n > 0) || !penalty || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  ddn::PenaltySpec spec;
  if (!ddn::parse_penalty(penalty, spec.kind)) {
    return fail(DDN_INVALID_ARGUMENT, std::string("unknown penalty '") + penalty + "'");
  }
  spec.alpha = alpha;
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    return fail(DDN_INVALID_ARGUMENT, "alpha must be positive and finite, got " +
                                          ddn::format_real(alpha));
  }
  if (n == 0) return fail(DDN_INVALID_ARGUMENT, "pool needs at least one value");
  return guarded([&] { store(ddn::cmd_pool(to_vector(values, n), spec, seed), out); });
}

ddn_status ddn_project(const double* values, size_t n, const char* norm, const char* surface,
                       double radius, int masked, uint64_t seed, ddn_report** out) {
  if ((!values && n > 0) || !norm || !surface || !out) {
    return fail(DDN_INVALID_ARGUMENT, "null argument");
  }
  ddn::ProjectionSpec spec;
  if (!ddn::parse_norm(norm, spec.norm)) {
    return fail(DDN_INVALID_ARGUMENT, std::string("unknown norm '") + norm + "'");
  }
  if (!ddn::parse_surface(surface, spec.surface)) {
    return fail(DDN_INVALID_ARGUMENT, std::string("unknown surface '") + surface + "'");
  }
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    return fail(DDN_INVALID_ARGUMENT, "radius must be positive and finite, got " +
                                          ddn::format_real(radius));
  }
  if (n == 0) return fail(DDN_INVALID_ARGUMENT, "project needs at least one value");
  spec.radius = radius;
  spec.masked_gradient = masked != 0;
  return guarded([&] { store(ddn::cmd_project(to_vector(values, n), spec, seed), out); });
}

void ddn_study_config_default(ddn_study_config* config) {
  if (!config) return;
  const ddn::StudyConfig d;
  config->points = d.points;
  config->inlier_sigma = d.inlier_sigma;
  config->center_low = d.center_low;
  config->center_high = d.center_high;
  config->outlier_low = d.outlier_low;
  config->outlier_high = d.outlier_high;
  config->fractions = nullptr;
  config->fraction_count = 0;
  config->trials = d.trials;
  config->alpha = d.alpha;
  config->seed = d.seed;
}

ddn_status ddn_study(const ddn_study_config* config, ddn_report** out) {
  if (!config || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  if (!config->fractions && config->fraction_count > 0) {
    return fail(DDN_INVALID_ARGUMENT, "fraction_count set without fractions");
  }
  return guarded([&] {
    ddn::StudyConfig c;
    c.points = config->points;
    c.inlier_sigma = config->inlier_sigma;
    c.center_low = config->center_low;
    c.center_high = config->center_high;
    c.outlier_low = config->outlier_low;
    c.outlier_high = config->outlier_high;
    if (config->fractions) {
      c.fractions.assign(config->fractions, config->fractions + config->fraction_count);
    }
    c.trials = config->trials;
    c.alpha = config->alpha;
    c.seed = config->seed;
    store(ddn::cmd_study(c), out);
  });
}

ddn_status ddn_train(const char* task, int steps, double step_size, uint64_t seed,
                     ddn_report** out) {
  if (!task || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  return guarded([&] { store(ddn::cmd_train(task, steps, step_size, seed), out); });
}

ddn_status ddn_problem_create(size_t n, size_t m, ddn_objective_fn objective, void* user,
                              ddn_problem** out) {
  if (!objective || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  if (n == 0 || m == 0) {
    return fail(DDN_INVALID_ARGUMENT, "problem needs n >= 1 and m >= 1, got n=" +
                                          std::to_string(n) + " m=" + std::to_string(m));
  }
  return guarded([&] {
    auto* p = new ddn_problem;
    p->n = n;
    p->m = m;
    p->objective = objective;
    p->user = user;
    *out = p;
  });
}

void ddn_problem_free(ddn_problem* problem) { delete problem; }

ddn_status ddn_problem_set_gradient(ddn_problem* problem, ddn_vector_fn grad_u) {
  if (!problem) return fail(DDN_INVALID_ARGUMENT, "null argument");
  problem->grad_u = grad_u;
  last_error.clear();
  return DDN_OK;
}

ddn_status ddn_problem_set_equality(ddn_problem* problem, size_t p, ddn_vector_fn h) {
  if (!problem || (p > 0 && !h)) return fail(DDN_INVALID_ARGUMENT, "null argument");
  if (p > problem->m) {
    return fail(DDN_DIMENSION_MISMATCH, "equality system over-determined: p=" + std::to_string(p) +
                                            " > m=" + std::to_string(problem->m));
  }
  problem->p = p;
  problem->h = p > 0 ? h : nullptr;
  last_error.clear();
  return DDN_OK;
}

ddn_status ddn_problem_set_inequality(ddn_problem* problem, size_t q, ddn_vector_fn g) {
  if (!problem || (q > 0 && !g)) return fail(DDN_INVALID_ARGUMENT, "null argument");
  problem->q = q;
  problem->g = q > 0 ? g : nullptr;
  last_error.clear();
  return DDN_OK;
}

ddn_status ddn_solve(const ddn_problem* problem, const double* x, const double* y0, double* y,
                     double* multipliers) {
  if (!problem || !x || !y0 || !y) return fail(DDN_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const ddn::DeclarativeProblem dp = to_problem(*problem);
    const ddn::Solution s =
        ddn::solve(dp, to_vector(x, problem->n), to_vector(y0, problem->m));
    copy_out(s.y, y);
    if (multipliers) copy_out(s.multipliers, multipliers);
  });
}

ddn_status ddn_gradient(const ddn_problem* problem, const double* x, const double* y,
                        const double* multipliers, double* jacobian, int* one_sided) {
  if (!problem || !x || !y || !jacobian) return fail(DDN_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const ddn::DeclarativeProblem dp = to_problem(*problem);
    ddn::Solution s;
    s.y = to_vector(y, problem->m);
    if (multipliers) s.multipliers = to_vector(multipliers, problem->p + problem->q);
    const ddn::Jacobian J = ddn::gradient(dp, to_vector(x, problem->n), s);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = J.matrix;
    std::memcpy(jacobian, rm.data(), static_cast<std::size_t>(rm.size()) * sizeof(double));
    if (one_sided) *one_sided = J.one_sided ? 1 : 0;
  });
}

ddn_status ddn_vjp(const ddn_problem* problem, const double* x, const double* y,
                   const double* multipliers, const double* v, double* out) {
  if (!problem || !x || !y || !v || !out) return fail(DDN_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const ddn::DeclarativeProblem dp = to_problem(*problem);
    const ddn::GradientContext ctx =
        ddn::make_context(dp, to_vector(x, problem->n), to_vector(y, problem->m),
                          multipliers_of(*problem, multipliers));
    copy_out(ctx.vjp(to_vector(v, problem->m), ddn::VjpMode::StreamColumns), out);
  });
}

}  // extern "C"
