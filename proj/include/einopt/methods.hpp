#pragma once

#include <optional>
#include <vector>

#include "einopt/executor.hpp"
#include "einopt/graph.hpp"
#include "einopt/optimizer.hpp"

namespace einopt {

// ---- CP decomposition ----

struct CpdProblem {
  Shape extents;
  int64_t rank = 0;
  std::vector<NodePtr> factors;  // A_i, shape (s_i, R)
  NodePtr input;                 // X variable
  NodePtr reconstruction;        // f(A_1..A_N)
  NodePtr loss;                  // 1/2 ||X - f||^2
};

CpdProblem cpd_graph(const Shape& extents, int64_t rank);

// Per-site Newton update graphs (site - tensorinv(hessian) . gradient),
// optimized with the dimension-tree constrained paths and shared through CSE.
struct CpdAlsSweep {
  CpdProblem problem;
  std::vector<NodePtr> new_factors;
  Graph sweep_graph;  // sinks: [loss, new_factors...]
  PassReport report;
};

CpdAlsSweep build_cpd_als(const CpdProblem& problem, bool dimension_tree = true);

// Runs one ALS sweep in place (each factor updated from the latest values).
// Returns the loss before the sweep.
double cpd_als_sweep(const CpdAlsSweep& sweep, Executor& exec, const DenseTensor& x,
                     std::vector<DenseTensor>& factor_values);

// ---- CP Gauss-Newton with CG on the normal equations ----

struct GnState {
  CpdProblem problem;
  NodePtr residual;                  // X - f
  std::vector<NodePtr> direction;    // v_i variables, shaped like factors
  NodePtr jvp_sum;                   // sum_i J_i v_i, residual-shaped
  NodePtr seed;                      // residual-shaped seed variable
  std::vector<NodePtr> vjp_graphs;   // J_i^T seed
  std::vector<NodePtr> grad_graphs;  // d loss / d A_i
  double lambda = 1e-4;              // Tikhonov term on the normal equations
  double cg_tol = 1e-12;
  int cg_max_iters = 500;
};

GnState build_cpd_gauss_newton(const CpdProblem& problem);

struct GnStepResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
  int cg_iters = 0;
  bool cg_converged = true;
};

// One Gauss-Newton step with line halving so the loss never increases.
GnStepResult cpd_gauss_newton_step(const GnState& state, Executor& exec,
                                   const DenseTensor& x,
                                   std::vector<DenseTensor>& factor_values);

// ---- Tucker (HOOI, stopping at the TTMc kernels) ----

struct TuckerProblem {
  Shape extents;
  Shape ranks;
  std::vector<NodePtr> factors;   // A_i, shape (s_i, R_i), orthonormal columns
  NodePtr input;                  // X variable
  std::vector<NodePtr> ttmc;      // Y_n graphs, derived by AD from <X, V x A's>
  NodePtr core;                   // G = X contracted with all A_n^T
  NodePtr loss;                   // 1/2 ||X - f(G, A's)||^2
};

TuckerProblem tucker_graph(const Shape& extents, const Shape& ranks);

struct TuckerSweep {
  TuckerProblem problem;
  std::vector<NodePtr> ttmc_opt;  // dimension-tree + CSE optimized Y_n
  Graph sweep_graph;
  PassReport report;
};

TuckerSweep build_tucker_sweep(const TuckerProblem& problem, bool dimension_tree = true);

// One HOOI sweep: per mode, evaluate Y_n and set A_n to the leading R_n
// eigenvectors of Y_(n) Y_(n)^T. Returns the loss after the sweep.
double tucker_ttmc_sweep(const TuckerSweep& sweep, Executor& exec, const DenseTensor& x,
                         std::vector<DenseTensor>& factor_values);

// ---- DMRG ----

struct DmrgProblem {
  int64_t sites = 0;
  Shape phys;                    // s_i
  Shape mpo_ranks;               // R_0..R_N with R_0 = R_N = 1
  Shape mps_ranks;
  std::vector<NodePtr> mpo;      // order 4: (R_{i-1}, x_i, y_i, R_i)
  std::vector<NodePtr> mps;      // order 3: (R_{i-1}, x_i, R_i)
  NodePtr numerator;             // <v, W v>
  NodePtr denominator;           // <v, v>
  NodePtr objective;             // Rayleigh quotient
};

// mps_ranks defaults to the full ranks min(prod left phys, prod right phys),
// optionally capped.
DmrgProblem dmrg_graph(int64_t sites, int64_t phys_extent, int64_t mpo_rank,
                       int64_t max_mps_rank = 0);

struct DmrgLocalOp {
  NodePtr hessian_graph;  // local Hessian of the numerator w.r.t. the site
  NodePtr hvp_graph;      // same action on a direction variable
  NodePtr direction;      // the direction variable
  NodePtr norm_hessian;   // local Hessian of the denominator (gauge metric)
};

DmrgLocalOp dmrg_local_hessian(const DmrgProblem& problem, int64_t site_index);

struct DmrgSweepState {
  DmrgProblem problem;
  std::vector<DmrgLocalOp> local_ops;  // one per site
  Graph sweep_graph;                   // all HVP graphs combined + CSE
};

DmrgSweepState build_dmrg_sweep(const DmrgProblem& problem);

struct DmrgSweepResult {
  double eigenvalue = 0.0;
  std::vector<double> rayleigh_trace;  // after each local step
};

// One left-to-right plus right-to-left sweep of local eigenproblem updates.
DmrgSweepResult dmrg_sweep(const DmrgSweepState& state, Executor& exec,
                           const std::vector<DenseTensor>& mpo_values,
                           std::vector<DenseTensor>& mps_values);

}  // namespace einopt
