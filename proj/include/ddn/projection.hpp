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

enum class Norm { L1, L2, Linf };
enum class Surface { Sphere, Ball };

const char* to_string(Norm norm) noexcept;
const char* to_string(Surface surface) noexcept;
bool parse_norm(const std::string& name, Norm& out);
bool parse_surface(const std::string& name, Surface& out);

struct ProjectionSpec {
  Norm norm = Norm::L2;
  Surface surface = Surface::Sphere;
  double radius = 1.0;
  bool masked_gradient = false;
};

/// Throws DimensionMismatch unless the radius is positive and finite.
void validate(const ProjectionSpec& spec);

double lp_norm(const Vector& v, Norm norm);

/// Euclidean projection of x onto {u : ||u||_p = r} or {u : ||u||_p <= r}.
/// The multiplier (one entry) follows L = f - lambda h with h = ||u||_p - r.
Solution project(const Vector& x, const ProjectionSpec& spec);

/// Dy(x) at y = project(x, spec). Masked variants zero the plateau
/// dimensions of the L1 and Linf faces.
Jacobian project_gradient(const Vector& x, const ProjectionSpec& spec, const Vector& y);

/// D_Y h(y) for h = ||u||_p - r: y/||y|| for L2, sign(y) for L1 (sign(0) = 0),
/// the signed indicator of the largest-magnitude set for Linf.
Vector constraint_normal(const Vector& y, Norm norm);

/// The projection as a generic problem (one equality for spheres, one
/// inequality for balls) with closed-form derivatives of f and h.
DeclarativeProblem projection_problem(Index n, const ProjectionSpec& spec);

/// y = argmin 1/2 ||u - x||^2 s.t. -u <= 0, solved by the active-set method.
DeclarativeProblem relu_problem(Index n);
Solution declarative_relu(const Vector& x);
Jacobian declarative_relu_gradient(const Vector& x, const Solution& solution);

}  // namespace ddn
