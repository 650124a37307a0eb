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
#include "ddn/implicit_diff.hpp"
#include "ddn/pooling.hpp"
#include "ddn/projection.hpp"
#include "ddn/solve.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ddn {

/// A processing unit with a forward map and a vector-Jacobian product at a
/// cached forward result. Counters record how often each direction ran.
class Node {
 public:
  virtual ~Node() = default;

  virtual std::string name() const = 0;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;

  Solution forward(const Vector& x) const;
  /// v^T Dy(x) at the cached solution.
  Vector vjp(const Vector& x, const Solution& solution, const Vector& v) const;
  Jacobian jacobian(const Vector& x, const Solution& solution) const;

  long forward_count() const { return forward_count_.load(); }
  long backward_count() const { return backward_count_.load(); }
  void reset_counters() const;

 protected:
  virtual Solution do_forward(const Vector& x) const = 0;
  virtual Vector do_vjp(const Vector& x, const Solution& solution, const Vector& v) const;
  virtual Jacobian do_jacobian(const Vector& x, const Solution& solution) const = 0;

 private:
  mutable std::atomic<long> forward_count_{0};
  mutable std::atomic<long> backward_count_{0};
};

using NodePtr = std::shared_ptr<const Node>;

/// Explicit forward function with an explicit Jacobian.
class ImperativeNode : public Node {
 public:
  using Forward = std::function<Vector(const Vector&)>;
  using Derivative = std::function<Matrix(const Vector&)>;

  ImperativeNode(std::string name, Index input_dim, Index output_dim, Forward forward,
                 Derivative jacobian);

  std::string name() const override { return name_; }
  Index input_dim() const override { return n_; }
  Index output_dim() const override { return m_; }

 protected:
  Solution do_forward(const Vector& x) const override;
  Jacobian do_jacobian(const Vector& x, const Solution& solution) const override;

 private:
  std::string name_;
  Index n_;
  Index m_;
  Forward forward_;
  Derivative jacobian_;
};

/// Generic argmin node: forward by the solvers, backward through the
/// implicit function theorem. `initial_guess` fixes the branch on problems
/// with several minima.
class DeclarativeNode : public Node {
 public:
  using Guess = std::function<Vector(const Vector&)>;

  DeclarativeNode(std::string name, DeclarativeProblem problem, Guess initial_guess,
                  SolverOptions solver_options = {}, GradientOptions gradient_options = {});

  std::string name() const override { return name_; }
  Index input_dim() const override { return problem_.input_dim; }
  Index output_dim() const override { return problem_.output_dim; }
  const DeclarativeProblem& problem() const { return problem_; }

 protected:
  Solution do_forward(const Vector& x) const override;
  Vector do_vjp(const Vector& x, const Solution& solution, const Vector& v) const override;
  Jacobian do_jacobian(const Vector& x, const Solution& solution) const override;

 private:
  std::string name_;
  DeclarativeProblem problem_;
  Guess guess_;
  SolverOptions solver_options_;
  GradientOptions gradient_options_;
};

/// Robust pooling of n inputs to one output with the closed-form gradient.
class PoolingNode : public Node {
 public:
  PoolingNode(Index n, PenaltySpec spec);

  std::string name() const override;
  Index input_dim() const override { return n_; }
  Index output_dim() const override { return 1; }

 protected:
  Solution do_forward(const Vector& x) const override;
  Jacobian do_jacobian(const Vector& x, const Solution& solution) const override;

 private:
  Index n_;
  PenaltySpec spec_;
};

class ProjectionNode : public Node {
 public:
  ProjectionNode(Index n, ProjectionSpec spec);

  std::string name() const override;
  Index input_dim() const override { return n_; }
  Index output_dim() const override { return n_; }

 protected:
  Solution do_forward(const Vector& x) const override;
  Jacobian do_jacobian(const Vector& x, const Solution& solution) const override;

 private:
  Index n_;
  ProjectionSpec spec_;
};

class NodeChain {
 public:
  NodeChain() = default;
  explicit NodeChain(std::vector<NodePtr> nodes);

  /// Appends a node; throws DimensionMismatch if it does not fit.
  NodeChain& then(NodePtr node);

  const std::vector<NodePtr>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  Index input_dim() const;
  Index output_dim() const;

  /// Throws DimensionMismatch on an empty chain or adjacent nodes that disagree.
  void validate() const;

 private:
  std::vector<NodePtr> nodes_;
};

/// Inputs and solutions of every node from one forward pass.
struct ChainTrace {
  std::vector<Vector> inputs;      // inputs[k] feeds node k
  std::vector<Solution> solutions; // solutions[k] is node k's output

  const Vector& output() const { return solutions.back().y; }
};

/// Solves each node in order. Node failures are rethrown with the node's
/// position and name prepended to the detail.
ChainTrace chain_forward(const NodeChain& chain, const Vector& x);

/// dJ/dx from dJ/dy by a right-to-left sweep of vector-Jacobian products.
/// Uses only the cached trace; no node is solved again.
Vector chain_backward(const NodeChain& chain, const ChainTrace& trace, const Vector& dJ_dy);

/// Materialized product D_K ... D_1 (for checks on small chains).
Matrix chain_jacobian(const NodeChain& chain, const ChainTrace& trace);

/// minimize_theta J(x, y(x)) with y(x) the lower argmin and theta the
/// learnable coordinates of x.
struct BilevelTask {
  ScalarFn upper_objective;
  VectorFn upper_grad_x;  // D_X J; finite differences if empty
  VectorFn upper_grad_y;  // D_Y J; finite differences if empty
  DeclarativeProblem lower_problem;
  /// Lower solver; defaults to `solve` started from `initial_guess`.
  std::function<Solution(const Vector&)> lower_solver;
  std::function<Vector(const Vector&)> initial_guess;
  Vector x0;
  std::vector<bool> learnable_mask;
  double step_size = 0.01;
  int max_iters = 100;
  /// J is the lower objective f itself; with an unconstrained lower problem
  /// the total derivative reduces to D_X f and no backward solve is needed.
  bool upper_is_lower_objective = false;
  GradientOptions gradient_options;
};

struct TrainRow {
  int iteration = 0;
  Vector theta;     // learnable coordinates of x
  double J = 0.0;
  Vector gradient;  // masked total derivative, empty on the last row
  bool one_sided = false;
};

struct TrainTrace {
  std::vector<TrainRow> rows;
  long forward_solves = 0;
  long backward_solves = 0;
  bool converged = false;  // stopped on a vanishing step
};

/// Throws DimensionMismatch on an inconsistent task.
void validate(const BilevelTask& task);

/// Total derivative D_X J + D_Y J Dy(x) at (x, solution), masked to the
/// learnable coordinates. `backward_solves` is incremented when the
/// implicit-function backward pass runs.
Vector total_derivative(const BilevelTask& task, const Vector& x, const Solution& solution,
                        long* backward_solves = nullptr, bool* one_sided = nullptr);

/// Fixed-step gradient descent on the learnable coordinates. Records J at
/// every iterate, including the initial one.
TrainTrace bilevel_train(const BilevelTask& task);

}  // namespace ddn
