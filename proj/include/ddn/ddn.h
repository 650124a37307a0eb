/*
 * Copyright 2026 The ddn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DDN_DDN_H
#define DDN_DDN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DDN_BUILDING_LIBRARY)
#    define DDN_API __declspec(dllexport)
#  else
#    define DDN_API __declspec(dllimport)
#  endif
#else
#  define DDN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define DDN_VERSION_MAJOR 0
#define DDN_VERSION_MINOR 1
#define DDN_VERSION_PATCH 0

typedef enum ddn_status {
  DDN_OK = 0,
  DDN_INVALID_ARGUMENT = 1,  /* null pointer, unknown name, malformed option */
  DDN_INFEASIBLE = 2,
  DDN_SOLVER_DIVERGED = 3,
  DDN_SINGULAR_HESSIAN = 4,
  DDN_RANK_DEFICIENT = 5,
  DDN_UNDEFINED_GRADIENT = 6,
  DDN_DIMENSION_MISMATCH = 7,
  DDN_INTERNAL = 8
} ddn_status;

DDN_API const char* ddn_version(void);
DDN_API const char* ddn_status_name(ddn_status status);

/* Message of the last failed call on this thread; "" after a success. The
 * pointer stays valid until the next call on the same thread. */
DDN_API const char* ddn_last_error(void);

/* Strings returned by the library are released with ddn_string_free. */
DDN_API void ddn_string_free(char* s);

/* ------------------------------------------------------------------------
 * Reports */

typedef struct ddn_report ddn_report;

DDN_API void ddn_report_free(ddn_report* report);

/* format is "json", "csv" or "text". */
DDN_API ddn_status ddn_report_render(const ddn_report* report, const char* format, char** out);

/* 1 when every check recorded in the report passed. */
DDN_API int ddn_report_passed(const ddn_report* report);
DDN_API size_t ddn_report_row_count(const ddn_report* report);
DDN_API size_t ddn_report_column_count(const ddn_report* report);
DDN_API const char* ddn_report_column_name(const ddn_report* report, size_t col);

/* Numeric cell as a double: booleans map to 0/1, integers are converted,
 * anything else (text, lists, missing) gives DDN_INVALID_ARGUMENT. */
DDN_API ddn_status ddn_report_number(const ddn_report* report, size_t row, const char* column,
                                     double* out);

/* ------------------------------------------------------------------------
 * Commands. tolerance <= 0 selects the per-family default. */

DDN_API ddn_status ddn_gradcheck(const char* node, int trials, uint64_t seed, double tolerance,
                                 ddn_report** out);

DDN_API ddn_status ddn_pool(const double* values, size_t n, const char* penalty, double alpha,
                            uint64_t seed, ddn_report** out);

DDN_API ddn_status ddn_project(const double* values, size_t n, const char* norm,
                               const char* surface, double radius, int masked, uint64_t seed,
                               ddn_report** out);

typedef struct ddn_study_config {
  int points;
  double inlier_sigma;
  double center_low;
  double center_high;
  double outlier_low;
  double outlier_high;
  const double* fractions;  /* NULL selects the default grid */
  size_t fraction_count;
  int trials;
  double alpha;
  uint64_t seed;
} ddn_study_config;

DDN_API void ddn_study_config_default(ddn_study_config* config);
DDN_API ddn_status ddn_study(const ddn_study_config* config, ddn_report** out);

DDN_API ddn_status ddn_train(const char* task, int steps, double step_size, uint64_t seed,
                             ddn_report** out);

/* ------------------------------------------------------------------------
 * User-defined problems
 *
 *   y(x) in argmin_u f(x, u)  s.t.  h(x, u) = 0,  g(x, u) <= 0
 *
 * x has n entries, u has m. Callbacks must not unwind through the library.
 * Derivatives that are not supplied are taken by finite differences. */

typedef double (*ddn_objective_fn)(const double* x, size_t n, const double* u, size_t m,
                                   void* user);
/* Writes `rows` values to out (the gradient in u, or constraint values). */
typedef void (*ddn_vector_fn)(const double* x, size_t n, const double* u, size_t m, double* out,
                              void* user);

typedef struct ddn_problem ddn_problem;

DDN_API ddn_status ddn_problem_create(size_t n, size_t m, ddn_objective_fn objective, void* user,
                                      ddn_problem** out);
DDN_API void ddn_problem_free(ddn_problem* problem);
DDN_API ddn_status ddn_problem_set_gradient(ddn_problem* problem, ddn_vector_fn grad_u);
DDN_API ddn_status ddn_problem_set_equality(ddn_problem* problem, size_t p, ddn_vector_fn h);
DDN_API ddn_status ddn_problem_set_inequality(ddn_problem* problem, size_t q, ddn_vector_fn g);

/* multipliers (p + q entries) may be NULL. */
DDN_API ddn_status ddn_solve(const ddn_problem* problem, const double* x, const double* y0,
                             double* y, double* multipliers);

/* jacobian receives m x n entries in row-major order. multipliers may be
 * NULL (recovered from the gradient), one_sided may be NULL. */
DDN_API ddn_status ddn_gradient(const ddn_problem* problem, const double* x, const double* y,
                                const double* multipliers, double* jacobian, int* one_sided);

/* out = v^T Dy(x), n entries, without forming the m x n Jacobian. */
DDN_API ddn_status ddn_vjp(const ddn_problem* problem, const double* x, const double* y,
                           const double* multipliers, const double* v, double* out);

#ifdef __cplusplus
}
#endif

#endif
