#pragma once

#include <map>
#include <string>
#include <vector>

#include "einopt/graph.hpp"
#include "einopt/tensor.hpp"

namespace einopt {

struct ExecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularMatrixError : ExecError {
  using ExecError::ExecError;
};

using FeedDict = std::map<std::string, DenseTensor>;

DenseTensor identity_tensor(int64_t extent);

// out axis i takes input axis perm[i] (numpy transpose convention)
DenseTensor permute(const DenseTensor& t, const std::vector<int>& perm);

// Two-operand einsum: diagonals/summed axes reduced per operand, operands
// transposed to (batch, free, contracted) order, matricized, one GEMM per
// batch index, reshaped back.
DenseTensor contract_pair(const DenseTensor& a, const DenseTensor& b,
                          const EinsumSpec& spec);

// Single-operand einsum (diagonal / sum / permutation).
DenseTensor einsum_single(const DenseTensor& a, const std::vector<AxisLabel>& axes,
                          const std::vector<AxisLabel>& output);

// Matricize to R x R, invert via pivoted elimination, reshape to
// (column group extents, row group extents). Throws SingularMatrixError when
// the pivot-ratio condition estimate exceeds 1e12.
DenseTensor tensor_inverse_value(const DenseTensor& t);

// GEMM seam: c (m x n) += a (m x k) * b (k x n), all row-major.
void gemm_accumulate(int64_t m, int64_t n, int64_t k, const double* a,
                     const double* b, double* c);

struct RunStats {
  std::map<std::string, int64_t> eval_count;  // uid -> evaluations (this run)
  bool evaluated(const std::string& uid) const { return eval_count.count(uid) > 0; }
};

class Executor {
 public:
  explicit Executor(std::vector<NodePtr> outputs) : outputs_(std::move(outputs)) {}

  // Evaluates only the subgraph reachable from `out`; results are memoized
  // per call keyed by uid.
  std::vector<DenseTensor> run(const FeedDict& feed, const std::vector<NodePtr>& out);
  std::vector<DenseTensor> run(const FeedDict& feed) { return run(feed, outputs_); }

  const RunStats& last_stats() const { return stats_; }

 private:
  std::vector<NodePtr> outputs_;
  RunStats stats_;
};

// One-shot convenience.
DenseTensor evaluate(const NodePtr& node, const FeedDict& feed);

}  // namespace einopt
