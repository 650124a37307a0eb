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

#include "ddn/compose.hpp"

#include "ddn/numdiff.hpp"

#include <utility>

namespace ddn {

namespace {

NodeError annotate(const NodeError& e, const std::string& where) {
  return NodeError(e.kind(), where + ": " + e.detail());
}

std::string position(std::size_t k, const Node& node) {
  return "chain node " + std::to_string(k) + " (" + node.name() + ")";
}

Vector learnable(const Vector& x, const std::vector<bool>& mask) {
  Index count = 0;
  for (bool b : mask) count += b ? 1 : 0;
  Vector theta(count);
  Index k = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) theta[k++] = x[static_cast<Index>(i)];
  }
  return theta;
}

}  // namespace

// ---------------------------------------------------------------------------
// Node

Solution Node::forward(const Vector& x) const {
  if (x.size() != input_dim()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    name() + " expects input of size " + std::to_string(input_dim()) + ", got " +
                        std::to_string(x.size()));
  }
  ++forward_count_;
  return do_forward(x);
}

Vector Node::vjp(const Vector& x, const Solution& solution, const Vector& v) const {
  if (v.size() != output_dim()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    name() + " vjp with v of size " + std::to_string(v.size()) + ", output is " +
                        std::to_string(output_dim()));
  }
  ++backward_count_;
  return do_vjp(x, solution, v);
}

Jacobian Node::jacobian(const Vector& x, const Solution& solution) const {
  ++backward_count_;
  return do_jacobian(x, solution);
}

void Node::reset_counters() const {
  forward_count_ = 0;
  backward_count_ = 0;
}

Vector Node::do_vjp(const Vector& x, const Solution& solution, const Vector& v) const {
  return do_jacobian(x, solution).matrix.transpose() * v;
}

ImperativeNode::ImperativeNode(std::string name, Index input_dim, Index output_dim,
                               Forward forward, Derivative jacobian)
    : name_(std::move(name)),
      n_(input_dim),
      m_(output_dim),
      forward_(std::move(forward)),
      jacobian_(std::move(jacobian)) {}

Solution ImperativeNode::do_forward(const Vector& x) const {
  Solution s;
  s.y = forward_(x);
  if (s.y.size() != m_) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    name_ + " produced " + std::to_string(s.y.size()) + " outputs, declared " +
                        std::to_string(m_));
  }
  s.multipliers = Vector::Zero(0);
  s.solver_info.converged = true;
  return s;
}

Jacobian ImperativeNode::do_jacobian(const Vector& x, const Solution&) const {
  Jacobian J;
  J.matrix = jacobian_(x);
  if (J.matrix.rows() != m_ || J.matrix.cols() != n_) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    name_ + " Jacobian is " + shape_string(J.matrix.rows(), J.matrix.cols()) +
                        ", expected " + shape_string(m_, n_));
  }
  return J;
}

DeclarativeNode::DeclarativeNode(std::string name, DeclarativeProblem problem, Guess initial_guess,
                                 SolverOptions solver_options, GradientOptions gradient_options)
    : name_(std::move(name)),
      problem_(std::move(problem)),
      guess_(std::move(initial_guess)),
      solver_options_(solver_options),
      gradient_options_(gradient_options) {}

Solution DeclarativeNode::do_forward(const Vector& x) const {
  const Vector y0 = guess_ ? guess_(x) : Vector::Zero(problem_.output_dim);
  return solve(problem_, x, y0, solver_options_);
}

Vector DeclarativeNode::do_vjp(const Vector& x, const Solution& solution, const Vector& v) const {
  std::optional<Vector> lambda;
  if (solution.multipliers.size() == problem_.num_eq + problem_.num_ineq &&
      solution.multipliers.size() > 0) {
    lambda = solution.multipliers;
  }
  const GradientContext ctx = make_context(problem_, x, solution.y, lambda, gradient_options_);
  return ctx.vjp(v, VjpMode::StreamColumns);
}

Jacobian DeclarativeNode::do_jacobian(const Vector& x, const Solution& solution) const {
  return gradient(problem_, x, solution, gradient_options_);
}

PoolingNode::PoolingNode(Index n, PenaltySpec spec) : n_(n), spec_(spec) { validate(spec_); }

std::string PoolingNode::name() const { return std::string("pool-") + to_string(spec_.kind); }

Solution PoolingNode::do_forward(const Vector& x) const { return robust_pool(x, spec_); }

Jacobian PoolingNode::do_jacobian(const Vector& x, const Solution& solution) const {
  return robust_pool_gradient(x, spec_, solution.y[0]);
}

ProjectionNode::ProjectionNode(Index n, ProjectionSpec spec) : n_(n), spec_(spec) {
  validate(spec_);
}

std::string ProjectionNode::name() const {
  return std::string("project-") + to_string(spec_.norm) + "-" + to_string(spec_.surface);
}

Solution ProjectionNode::do_forward(const Vector& x) const { return project(x, spec_); }

Jacobian ProjectionNode::do_jacobian(const Vector& x, const Solution& solution) const {
  return project_gradient(x, spec_, solution.y);
}

// ---------------------------------------------------------------------------
// NodeChain

NodeChain::NodeChain(std::vector<NodePtr> nodes) : nodes_(std::move(nodes)) { validate(); }

NodeChain& NodeChain::then(NodePtr node) {
  if (!node) throw NodeError(ErrorKind::DimensionMismatch, "null node appended to chain");
  if (!nodes_.empty() && nodes_.back()->output_dim() != node->input_dim()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "cannot append " + node->name() + " (input " +
                        std::to_string(node->input_dim()) + ") after " + nodes_.back()->name() +
                        " (output " + std::to_string(nodes_.back()->output_dim()) + ")");
  }
  nodes_.push_back(std::move(node));
  return *this;
}

Index NodeChain::input_dim() const { return nodes_.empty() ? 0 : nodes_.front()->input_dim(); }
Index NodeChain::output_dim() const { return nodes_.empty() ? 0 : nodes_.back()->output_dim(); }

void NodeChain::validate() const {
  if (nodes_.empty()) throw NodeError(ErrorKind::DimensionMismatch, "empty node chain");
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    if (!nodes_[k]) {
      throw NodeError(ErrorKind::DimensionMismatch, "chain node " + std::to_string(k) + " is null");
    }
    if (k > 0 && nodes_[k - 1]->output_dim() != nodes_[k]->input_dim()) {
      throw NodeError(ErrorKind::DimensionMismatch,
                      position(k, *nodes_[k]) + " takes " + std::to_string(nodes_[k]->input_dim()) +
                          " inputs but node " + std::to_string(k - 1) + " produces " +
                          std::to_string(nodes_[k - 1]->output_dim()));
    }
  }
}

ChainTrace chain_forward(const NodeChain& chain, const Vector& x) {
  chain.validate();
  ChainTrace trace;
  trace.inputs.reserve(chain.size());
  trace.solutions.reserve(chain.size());
  Vector z = x;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const Node& node = *chain.nodes()[k];
    trace.inputs.push_back(z);
    try {
      trace.solutions.push_back(node.forward(z));
    } catch (const NodeError& e) {
      throw annotate(e, position(k, node));
    }
    z = trace.solutions.back().y;
  }
  return trace;
}

Vector chain_backward(const NodeChain& chain, const ChainTrace& trace, const Vector& dJ_dy) {
  chain.validate();
  if (trace.solutions.size() != chain.size() || trace.inputs.size() != chain.size()) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "trace holds " + std::to_string(trace.solutions.size()) +
                        " solutions for a chain of " + std::to_string(chain.size()) + " nodes");
  }
  Vector v = dJ_dy;
  for (std::size_t k = chain.size(); k-- > 0;) {
    const Node& node = *chain.nodes()[k];
    try {
      v = node.vjp(trace.inputs[k], trace.solutions[k], v);
    } catch (const NodeError& e) {
      throw annotate(e, position(k, node));
    }
  }
  return v;
}

Matrix chain_jacobian(const NodeChain& chain, const ChainTrace& trace) {
  chain.validate();
  Matrix D = Matrix::Identity(chain.input_dim(), chain.input_dim());
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const Node& node = *chain.nodes()[k];
    try {
      D = node.jacobian(trace.inputs[k], trace.solutions[k]).matrix * D;
    } catch (const NodeError& e) {
      throw annotate(e, position(k, node));
    }
  }
  return D;
}

// ---------------------------------------------------------------------------
// Bilevel training

void validate(const BilevelTask& task) {
  const Index n = task.lower_problem.input_dim;
  if (!task.upper_objective) {
    throw NodeError(ErrorKind::DimensionMismatch, "bilevel task has no upper objective");
  }
  if (task.x0.size() != n || static_cast<Index>(task.learnable_mask.size()) != n) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "bilevel task with n=" + std::to_string(n) + " has x0:" +
                        std::to_string(task.x0.size()) + " and mask:" +
                        std::to_string(task.learnable_mask.size()));
  }
  if (!(task.step_size > 0.0)) {
    throw NodeError(ErrorKind::DimensionMismatch,
                    "bilevel step size must be positive, got " + format_real(task.step_size));
  }
  if (task.max_iters < 0) {
    throw NodeError(ErrorKind::DimensionMismatch, "bilevel max_iters must be >= 0");
  }
}

Vector total_derivative(const BilevelTask& task, const Vector& x, const Solution& solution,
                        long* backward_solves, bool* one_sided) {
  const DeclarativeProblem& lower = task.lower_problem;
  const Vector& y = solution.y;
  Vector dJ;
  if (one_sided) *one_sided = false;
  if (task.upper_is_lower_objective && !lower.has_eq() && !lower.has_ineq()) {
    // D_Y f(x, y) = 0 at the minimizer, so only the explicit dependence remains.
    dJ = task.upper_grad_x ? task.upper_grad_x(x, y) : ProblemDerivatives(lower).f_x(x, y);
  } else {
    const Vector gx = task.upper_grad_x
                          ? task.upper_grad_x(x, y)
                          : fd_gradient([&](const Vector& xs) { return task.upper_objective(xs, y); }, x);
    const Vector gy = task.upper_grad_y
                          ? task.upper_grad_y(x, y)
                          : fd_gradient([&](const Vector& ys) { return task.upper_objective(x, ys); }, y);
    std::optional<Vector> lambda;
    if (solution.multipliers.size() > 0 &&
        solution.multipliers.size() == lower.num_eq + lower.num_ineq) {
      lambda = solution.multipliers;
    }
    const GradientContext ctx = make_context(lower, x, y, lambda, task.gradient_options);
    dJ = gx + ctx.vjp(gy, VjpMode::StreamColumns);
    if (backward_solves) ++*backward_solves;
    if (one_sided) *one_sided = ctx.one_sided();
  }
  for (std::size_t i = 0; i < task.learnable_mask.size(); ++i) {
    if (!task.learnable_mask[i]) dJ[static_cast<Index>(i)] = 0.0;
  }
  return dJ;
}

TrainTrace bilevel_train(const BilevelTask& task) {
  validate(task);
  const DeclarativeProblem& lower = task.lower_problem;
  const bool constrained = lower.has_eq() || lower.has_ineq();
  TrainTrace trace;
  Vector x = task.x0;
  for (int it = 0;; ++it) {
    Solution sol;
    try {
      if (task.lower_solver) {
        sol = task.lower_solver(x);
      } else {
        const Vector y0 = task.initial_guess ? task.initial_guess(x) : Vector::Zero(lower.output_dim);
        sol = solve(lower, x, y0);
      }
    } catch (const NodeError& e) {
      const std::string where = "lower problem at iteration " + std::to_string(it);
      if (e.kind() == ErrorKind::InfeasibleProblem ||
          (constrained && e.kind() == ErrorKind::SolverDiverged)) {
        throw NodeError(ErrorKind::InfeasibleProblem, where + " has no feasible solution: " + e.detail());
      }
      throw annotate(e, where);
    }
    ++trace.forward_solves;

    TrainRow row;
    row.iteration = it;
    row.theta = learnable(x, task.learnable_mask);
    row.J = task.upper_objective(x, sol.y);
    if (it >= task.max_iters) {
      trace.rows.push_back(std::move(row));
      break;
    }
    try {
      row.gradient = total_derivative(task, x, sol, &trace.backward_solves, &row.one_sided);
    } catch (const NodeError& e) {
      throw annotate(e, "backward pass at iteration " + std::to_string(it));
    }
    const Vector step = -task.step_size * row.gradient;
    trace.rows.push_back(row);
    if (step.size() == 0 || step.cwiseAbs().maxCoeff() <= 1e-10) {
      trace.converged = true;
      break;
    }
    x += step;
  }
  return trace;
}

}  // namespace ddn
