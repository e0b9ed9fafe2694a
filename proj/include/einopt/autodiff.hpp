#pragma once

#include <vector>

#include "einopt/graph.hpp"

namespace einopt {

struct AutodiffError : GraphError {
  using GraphError::GraphError;
};

// Reverse-mode gradient of a scalar output w.r.t. variables. Contributions
// from multiple consumers are summed.
std::vector<NodePtr> gradients(const NodePtr& output, const std::vector<NodePtr>& wrt);

// v contracted against the Jacobian of output w.r.t. wrt over all output
// axes; shape(v) must equal shape(output).
NodePtr vjp(const NodePtr& v, const NodePtr& output, const NodePtr& wrt);

// J . v via the double-VJP construction; shape(v) must equal shape(wrt).
NodePtr jvp(const NodePtr& v, const NodePtr& output, const NodePtr& wrt);

// grad(<grad(output, wrt), v>, wrt); output must be scalar.
NodePtr hvp(const NodePtr& output, const NodePtr& wrt, const NodePtr& v);

// Explicit Jacobian as an einsum graph with identity (delta) nodes, shape
// (shape(output) ++ shape(wrt)). Every node on the path from wrt to output
// must be a linear kind.
std::vector<NodePtr> jacobian(const NodePtr& output, const std::vector<NodePtr>& wrt);

// Jacobian applied twice: block (i,j) has shape (shape(wrt_i) ++ shape(wrt_j)).
std::vector<std::vector<NodePtr>> hessian(const NodePtr& output,
                                          const std::vector<NodePtr>& wrt);

}  // namespace einopt
