#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace einopt {

// In-place inverse of a row-major n x n matrix via Gauss-Jordan elimination
// with partial pivoting. Returns the pivot-ratio condition estimate; throws
// if it exceeds `max_condition`.
double invert_matrix(std::vector<double>& a, int64_t n, double max_condition = 1e12);

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues
// ascending; eigenvectors_row_major[k*n..] holds the k-th eigenvector, sign
// fixed so its largest-magnitude entry is positive (deterministic, ties by
// index order).
void jacobi_eigh(const std::vector<double>& a, int64_t n,
                 std::vector<double>& eigenvalues,
                 std::vector<double>& eigenvectors_row_major);

// Smallest eigenpair of a symmetric operator given by matvec, via Lanczos
// with full reorthogonalization. Breakdown restarts with a fresh
// deterministic start vector, at most `max_restarts` times.
struct LanczosResult {
  double eigenvalue = 0.0;
  std::vector<double> eigenvector;
  bool converged = false;
};
LanczosResult lanczos_smallest(
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& matvec,
    int64_t n, int max_iters = 200, double tol = 1e-12, int max_restarts = 3);

}  // namespace einopt
