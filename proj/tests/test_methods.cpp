#include <cmath>

#include "doctest.h"
#include "einopt/executor.hpp"
#include "einopt/linalg.hpp"
#include "einopt/methods.hpp"
#include "einopt/optimizer.hpp"
#include "helpers.hpp"

using namespace einopt;
using namespace testutil;

namespace {

// exact rank-R input and slightly perturbed starting factors
void make_cpd_instance(const CpdProblem& p, uint64_t seed, DenseTensor& x,
                       std::vector<DenseTensor>& init) {
  CounterRng rng(seed);
  FeedDict fd;
  std::vector<DenseTensor> truth;
  for (auto& f : p.factors) {
    truth.push_back(rng.tensor(f->shape));
    fd[f->name] = truth.back();
  }
  x = evaluate(p.reconstruction, fd);
  init.clear();
  for (auto& t : truth) {
    DenseTensor v = t;
    DenseTensor noise = rng.tensor(t.shape());
    for (int64_t i = 0; i < v.size(); ++i) v[i] += 0.1 * noise[i];
    init.push_back(std::move(v));
  }
}

}  // namespace

TEST_CASE("matrix inverse and condition estimate") {
  std::vector<double> a = {4, 1, 0, 1, 3, 1, 0, 1, 2};
  std::vector<double> orig = a;
  double cond = invert_matrix(a, 3);
  CHECK(cond >= 1.0);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      double s = 0;
      for (int64_t k = 0; k < 3; ++k) s += orig[i * 3 + k] * a[k * 3 + j];
      CHECK(s == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  std::vector<double> sing = {1, 2, 2, 4};
  CHECK_THROWS(invert_matrix(sing, 2));
}

TEST_CASE("jacobi eigendecomposition reconstructs the matrix") {
  CounterRng rng(9);
  const int64_t n = 6;
  std::vector<double> a(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j <= i; ++j) {
      double v = rng.uniform();
      a[static_cast<size_t>(i * n + j)] = v;
      a[static_cast<size_t>(j * n + i)] = v;
    }
  std::vector<double> w, v;
  jacobi_eigh(a, n, w, v);
  for (int64_t i = 0; i + 1 < n; ++i) CHECK(w[static_cast<size_t>(i)] <= w[static_cast<size_t>(i + 1)]);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (int64_t k = 0; k < n; ++k)
        s += w[static_cast<size_t>(k)] * v[static_cast<size_t>(k * n + i)] *
             v[static_cast<size_t>(k * n + j)];
      CHECK(s == doctest::Approx(a[static_cast<size_t>(i * n + j)]).epsilon(1e-9));
    }
}

TEST_CASE("lanczos finds the smallest eigenvalue of a symmetric operator") {
  CounterRng rng(10);
  const int64_t n = 30;
  std::vector<double> a(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j <= i; ++j) {
      double v = rng.uniform();
      a[static_cast<size_t>(i * n + j)] = v;
      a[static_cast<size_t>(j * n + i)] = v;
    }
  std::vector<double> w, v;
  jacobi_eigh(a, n, w, v);
  auto matvec = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (int64_t i = 0; i < n; ++i) {
      double s = 0;
      for (int64_t j = 0; j < n; ++j) s += a[static_cast<size_t>(i * n + j)] * x[static_cast<size_t>(j)];
      y[static_cast<size_t>(i)] = s;
    }
  };
  LanczosResult r = lanczos_smallest(matvec, n);
  CHECK(r.eigenvalue == doctest::Approx(w[0]).epsilon(1e-8));
}

TEST_CASE("cpd als converges monotonically on an exact instance") {
  CpdProblem p = cpd_graph({8, 8, 8}, 5);
  CpdAlsSweep sweep = build_cpd_als(p);
  DenseTensor x;
  std::vector<DenseTensor> factors;
  make_cpd_instance(p, 21, x, factors);
  Executor exec(sweep.sweep_graph.sinks);
  double prev = 1e300, last = 1e300;
  for (int it = 0; it < 50; ++it) {
    double loss = cpd_als_sweep(sweep, exec, x, factors);
    CHECK(loss <= prev * (1 + 1e-9));
    prev = loss;
    last = loss;
    if (loss < 1e-12) break;
  }
  CHECK(last < 1e-10);
}

TEST_CASE("als with and without the dimension tree produce the same iterates") {
  CpdProblem p = cpd_graph({5, 5, 5}, 3);
  CpdAlsSweep tree = build_cpd_als(p, true);
  CpdAlsSweep flat = build_cpd_als(p, false);
  DenseTensor x;
  std::vector<DenseTensor> f1, f2;
  make_cpd_instance(p, 22, x, f1);
  f2 = f1;
  Executor e1(tree.sweep_graph.sinks), e2(flat.sweep_graph.sinks);
  for (int it = 0; it < 3; ++it) {
    cpd_als_sweep(tree, e1, x, f1);
    cpd_als_sweep(flat, e2, x, f2);
  }
  for (size_t i = 0; i < f1.size(); ++i) CHECK(rel_err(f1[i], f2[i]) < 1e-8);
}

TEST_CASE("cpd gauss-newton converges on an exact instance") {
  CpdProblem p = cpd_graph({8, 8, 8}, 5);
  GnState st = build_cpd_gauss_newton(p);
  DenseTensor x;
  std::vector<DenseTensor> factors;
  make_cpd_instance(p, 23, x, factors);
  Executor exec({});
  double prev = 1e300, last = 1e300;
  for (int it = 0; it < 30; ++it) {
    GnStepResult r = cpd_gauss_newton_step(st, exec, x, factors);
    CHECK(r.loss_after <= r.loss_before * (1 + 1e-12));
    CHECK(r.loss_before <= prev * (1 + 1e-9));
    prev = r.loss_before;
    last = r.loss_after;
    if (last < 1e-12) break;
  }
  CHECK(last < 1e-10);
}

TEST_CASE("tucker sweeps recover an exactly representable input") {
  Shape extents = {6, 6, 6}, ranks = {3, 3, 3};
  TuckerProblem p = tucker_graph(extents, ranks);
  TuckerSweep sweep = build_tucker_sweep(p);
  CounterRng rng(24);
  // input with exact multilinear rank (3,3,3)
  FeedDict fd;
  std::vector<DenseTensor> factors;
  for (auto& f : p.factors) {
    factors.push_back(rng.tensor(f->shape));
    fd[f->name] = factors.back();
  }
  DenseTensor core = rng.tensor(ranks);
  NodePtr g = variable("__tt_core", ranks);
  NodePtr recon = make_einsum("abc,ia,jb,kc->ijk",
                              {g, p.factors[0], p.factors[1], p.factors[2]});
  fd["__tt_core"] = core;
  DenseTensor x = evaluate(recon, fd);

  Executor exec(sweep.sweep_graph.sinks);
  double loss = 1e300;
  for (int it = 0; it < 30; ++it) {
    loss = tucker_ttmc_sweep(sweep, exec, x, factors);
    if (loss < 1e-12) break;
  }
  CHECK(loss < 1e-10);
}

TEST_CASE("dmrg sweep converges to the dense ground state") {
  const int64_t sites = 4, phys = 2, rank = 3;  // total dimension 16
  DmrgProblem p = dmrg_graph(sites, phys, rank);
  DmrgSweepState st = build_dmrg_sweep(p);
  CounterRng rng(25);
  std::vector<DenseTensor> mpo, mps;
  for (auto& w : p.mpo) {
    DenseTensor t = rng.tensor(w->shape);
    const Shape& s = t.shape();
    DenseTensor sym(s);
    for (int64_t i = 0; i < s[0]; ++i)
      for (int64_t x = 0; x < s[1]; ++x)
        for (int64_t y = 0; y < s[2]; ++y)
          for (int64_t j = 0; j < s[3]; ++j)
            sym.at({i, x, y, j}) = 0.5 * (t.at({i, x, y, j}) + t.at({i, y, x, j}));
    mpo.push_back(std::move(sym));
  }
  for (auto& m : p.mps) mps.push_back(rng.tensor(m->shape));

  // dense matricized operator for the oracle
  const int64_t dim = 16;
  std::vector<double> dense(static_cast<size_t>(dim * dim), 0.0);
  for (int64_t x0 = 0; x0 < 2; ++x0)
    for (int64_t x1 = 0; x1 < 2; ++x1)
      for (int64_t x2 = 0; x2 < 2; ++x2)
        for (int64_t x3 = 0; x3 < 2; ++x3)
          for (int64_t y0 = 0; y0 < 2; ++y0)
            for (int64_t y1 = 0; y1 < 2; ++y1)
              for (int64_t y2 = 0; y2 < 2; ++y2)
                for (int64_t y3 = 0; y3 < 2; ++y3) {
                  double s = 0;
                  for (int64_t b1 = 0; b1 < rank; ++b1)
                    for (int64_t b2 = 0; b2 < rank; ++b2)
                      for (int64_t b3 = 0; b3 < rank; ++b3)
                        s += mpo[0].at({0, x0, y0, b1}) * mpo[1].at({b1, x1, y1, b2}) *
                             mpo[2].at({b2, x2, y2, b3}) * mpo[3].at({b3, x3, y3, 0});
                  int64_t row = ((x0 * 2 + x1) * 2 + x2) * 2 + x3;
                  int64_t col = ((y0 * 2 + y1) * 2 + y2) * 2 + y3;
                  dense[static_cast<size_t>(row * dim + col)] = s;
                }
  std::vector<double> w, v;
  jacobi_eigh(dense, dim, w, v);

  Executor exec(st.sweep_graph.sinks);
  double eig = 1e300;
  for (int it = 0; it < 12; ++it) {
    DmrgSweepResult r = dmrg_sweep(st, exec, mpo, mps);
    eig = r.eigenvalue;
  }
  CHECK(std::abs(eig - w[0]) < 1e-8);
}
