#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "einopt/graph.hpp"

namespace einopt {

// ---- contraction paths ----

struct PlanStep {
  int lhs = 0, rhs = 0;       // indices into the working operand list
  EinsumSpec spec;            // two-operand spec for this step
  int64_t flops = 0;          // 2 * prod(extents of the step's axis union)
};

// Binary contraction order over a flat einsum's operands. Steps remove their
// two entries from the working list and append the intermediate at the end
// (opt_einsum convention).
struct ContractionPlan {
  std::vector<PlanStep> steps;
  int64_t total_flops = 0;
};

int64_t flop_count(const ContractionPlan& plan);

// Path searches over a flat spec. is_delta flags operands whose contraction
// steps are free in the cost model (identity nodes).
ContractionPlan greedy_path(const EinsumSpec& spec, const std::vector<bool>& is_delta);
ContractionPlan exhaustive_path(const EinsumSpec& spec, const std::vector<bool>& is_delta);
ContractionPlan left_fold_path(const EinsumSpec& spec, const std::vector<bool>& is_delta);

// Exhaustive for <= 5 operands, greedy beyond.
ContractionPlan plan_for(const EinsumSpec& spec, const std::vector<bool>& is_delta);
ContractionPlan plan_for(const NodePtr& einsum_node);

// ---- dimension union-find ----

// Disjoint sets over the dimensions of a linearized einsum tree: two dims
// share a set iff connected by a chain of shared subscripts. Each set gets
// one fresh axis label.
class DimUnionFind {
 public:
  int add_dim(int64_t extent);
  int find(int d) const;
  void unite(int a, int b);  // throws on extent conflict
  AxisLabel label_of(int d);  // fresh label of d's set (assigned on demand)
  int64_t extent_of(int d) const { return extents_[static_cast<size_t>(find(d))]; }

 private:
  mutable std::vector<int> parent_;
  std::vector<int64_t> extents_;
  std::map<int, AxisLabel> labels_;
};

// Fused view of the einsum tree rooted at `root`: leaf operands (in
// deterministic traversal order) and the single equivalent spec.
struct FusedEinsum {
  std::vector<NodePtr> leaves;
  EinsumSpec spec;
  double coeff = 1.0;  // accumulated from ScalarMul/Negate folded into the tree
};
FusedEinsum build_uf(const NodePtr& root);

// ---- rewrite passes (pure graph-to-graph) ----

Graph distribute(const Graph& g);
Graph fuse_einsums(const Graph& g);
Graph decompose_inverse(const Graph& g);
Graph prune_identity(const Graph& g);
Graph prune_inverse(const Graph& g);
Graph normalize_algebra(const Graph& g);
Graph cse(const Graph& g);

NodePtr distribute(const NodePtr& n);
NodePtr fuse_einsums(const NodePtr& n);
NodePtr decompose_inverse(const NodePtr& n);
NodePtr prune_identity(const NodePtr& n);
NodePtr prune_inverse(const NodePtr& n);
NodePtr normalize_algebra(const NodePtr& n);

// Splits a flat einsum into a binary contraction tree along the chosen path.
std::pair<NodePtr, ContractionPlan> opt_contract_path(const NodePtr& einsum_node);

// Alg. 2-style constrained path: inputs listed in `order` join the tree in
// that precedence; remaining freedom is optimized. Entries must be inputs of
// the einsum.
NodePtr opt_contract_path_w_constraint(const NodePtr& einsum_node,
                                       const std::vector<NodePtr>& order);

// For alternating minimization: update_nodes[i] (a flat einsum) gets the
// constrained path [sites[N],...,sites[i+1], sites[1],...,sites[i-1]], so a
// following cse pass shares contraction prefixes across the sweep.
std::vector<NodePtr> generate_dimension_tree(const std::vector<NodePtr>& update_nodes,
                                             const std::vector<NodePtr>& sites);

// ---- cost model & pipeline ----

// Estimated flops of a whole graph: binary einsums cost one step, unsplit
// flat einsums a naive nested loop over all labels, identity operands of
// binary steps are free, a tensor inverse costs 2 R^3, elementwise nodes
// their output size.
int64_t flop_estimate(const Graph& g);
int64_t flop_estimate(const NodePtr& n);

struct PassEntry {
  std::string pass;
  int64_t nodes_before = 0, nodes_after = 0;
  int64_t flops_before = 0, flops_after = 0;
};
struct PassReport {
  std::vector<PassEntry> entries;
  int64_t nodes_before() const { return entries.empty() ? 0 : entries.front().nodes_before; }
  int64_t nodes_after() const { return entries.empty() ? 0 : entries.back().nodes_after; }
  int64_t flops_before() const { return entries.empty() ? 0 : entries.front().flops_before; }
  int64_t flops_after() const { return entries.empty() ? 0 : entries.back().flops_after; }
  std::string to_json() const;
};

struct OptimizeOptions {
  int max_symbolic_iters = 20;
  // Constrained-path hook used by dimension-tree drivers: einsums whose
  // inputs contain `constrained_pivot` get this precedence order.
  std::vector<NodePtr> constraint_order;
  NodePtr constrained_pivot;
  std::string dump_dir;  // when set, DOT dumps after each pass
  std::vector<std::string> dump_passes;  // restrict dumps to these pass names
};

Graph optimize(const Graph& g, PassReport* report = nullptr,
               const OptimizeOptions& options = {});
NodePtr optimize(const NodePtr& n, PassReport* report = nullptr,
                 const OptimizeOptions& options = {});

// Rewrites every TensorInverse(u) into TensorInverse(u + eps * I_u).
Graph regularize_inverse_operands(const Graph& g, double eps);
NodePtr regularize_inverse_operands(const NodePtr& n, double eps);

// Number of einsum nodes whose direct inputs include `input` (e.g. counting
// contractions that touch the decomposed tensor in a sweep graph).
int64_t count_einsums_touching(const Graph& g, const NodePtr& input);

}  // namespace einopt
