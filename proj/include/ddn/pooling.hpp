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

#include <string>

namespace ddn {

enum class Penalty { Quadratic, PseudoHuber, Huber, Welsch, TruncatedQuadratic };

const char* to_string(Penalty kind) noexcept;
/// Accepts the lower-case names used on the command line ("pseudo-huber",
/// "pseudohuber", "trunc-quad", ...). Returns false on an unknown name.
bool parse_penalty(const std::string& name, Penalty& out);

struct PenaltySpec {
  Penalty kind = Penalty::Quadratic;
  double alpha = 1.0;
};

/// Throws DimensionMismatch unless alpha is positive and finite.
void validate(const PenaltySpec& spec);

double penalty_value(const PenaltySpec& spec, double z);
double penalty_d1(const PenaltySpec& spec, double z);
/// At the Huber kink and the truncated-quadratic jump the inner branch is used.
double penalty_d2(const PenaltySpec& spec, double z);

/// sum_i phi(u - x_i)
double pooling_objective(const Vector& x, const PenaltySpec& spec, double u);

/// y in argmin_u sum_i phi(u - x_i; alpha). Convex penalties are solved by
/// safeguarded Newton on [min x, max x]; Welsch and truncated quadratic by
/// local descent from the mean and the median, keeping the lower minimum
/// (ties go to the smaller y).
Solution robust_pool(const Vector& x, const PenaltySpec& spec);

/// Closed-form 1 x n derivative of the pooled value. Throws UndefinedGradient
/// when the weights sum to zero.
Jacobian robust_pool_gradient(const Vector& x, const PenaltySpec& spec, double y);

enum class PoolingDerivatives { None, Gradient, Full };

/// The pooling node as a generic problem with n inputs and one output.
/// `level` selects which derivatives are supplied in closed form.
DeclarativeProblem pooling_problem(Index n, const PenaltySpec& spec,
                                   PoolingDerivatives level = PoolingDerivatives::None);

}  // namespace ddn
