#include "einopt/methods.hpp"

#include <algorithm>
#include <cmath>

#include "einopt/autodiff.hpp"
#include "einopt/linalg.hpp"

namespace einopt {

namespace {

NodePtr full_inner(NodePtr a, NodePtr b) {
  EinsumSpec s;
  std::vector<AxisLabel> axes;
  for (int64_t i = 0; i < a->order(); ++i) axes.push_back(static_cast<AxisLabel>(i));
  s.operands = {axes, axes};
  return make_einsum(std::move(s), {std::move(a), std::move(b)});
}

FeedDict base_feed(const std::vector<NodePtr>& vars, const std::vector<DenseTensor>& vals) {
  FeedDict feed;
  for (size_t i = 0; i < vars.size(); ++i) feed[vars[i]->name] = vals[i];
  return feed;
}

double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---- CP decomposition ----

CpdProblem cpd_graph(const Shape& extents, int64_t rank) {
  if (extents.size() < 2 || rank < 1) throw GraphError("cpd_graph: invalid problem size");
  CpdProblem p;
  p.extents = extents;
  p.rank = rank;
  int64_t n = static_cast<int64_t>(extents.size());
  for (int64_t i = 0; i < n; ++i)
    p.factors.push_back(variable("A" + std::to_string(i + 1),
                                 {extents[static_cast<size_t>(i)], rank}));
  p.input = variable("X", extents);

  EinsumSpec fs;  // shared rank label n
  for (int64_t i = 0; i < n; ++i) {
    fs.operands.push_back({static_cast<AxisLabel>(i), static_cast<AxisLabel>(n)});
    fs.output.push_back(static_cast<AxisLabel>(i));
  }
  p.reconstruction = make_einsum(std::move(fs), p.factors);
  NodePtr r = sub(p.input, p.reconstruction);
  p.loss = scalar_mul(0.5, full_inner(r, r));
  return p;
}

CpdAlsSweep build_cpd_als(const CpdProblem& problem, bool dimension_tree) {
  CpdAlsSweep sweep;
  sweep.problem = problem;
  size_t n = problem.factors.size();
  auto hess = hessian(problem.loss, problem.factors);
  std::vector<NodePtr> raw;
  for (size_t i = 0; i < n; ++i) {
    NodePtr grad = gradients(problem.loss, {problem.factors[i]})[0];
    NodePtr step = tensordot(tensor_inverse(hess[i][i]), grad);
    raw.push_back(sub(problem.factors[i], step));
  }

  std::vector<NodePtr> sinks;
  sinks.push_back(optimize(problem.loss, &sweep.report));
  for (size_t i = 0; i < n; ++i) {
    OptimizeOptions opts;
    if (dimension_tree) {
      opts.constrained_pivot = problem.input;
      for (size_t j = n; j-- > i + 1;) opts.constraint_order.push_back(problem.factors[j]);
      for (size_t j = 0; j < i; ++j) opts.constraint_order.push_back(problem.factors[j]);
    }
    sinks.push_back(optimize(raw[i], &sweep.report, opts));
  }
  Graph g = cse(Graph(std::move(sinks)));
  g = regularize_inverse_operands(g, 1e-12);
  sweep.sweep_graph = g;
  sweep.new_factors.assign(g.sinks.begin() + 1, g.sinks.end());
  return sweep;
}

double cpd_als_sweep(const CpdAlsSweep& sweep, Executor& exec, const DenseTensor& x,
                     std::vector<DenseTensor>& factor_values) {
  const CpdProblem& p = sweep.problem;
  FeedDict feed = base_feed(p.factors, factor_values);
  feed["X"] = x;
  double before = exec.run(feed, {sweep.sweep_graph.sinks[0]})[0].scalar_value();
  for (size_t i = 0; i < p.factors.size(); ++i) {
    DenseTensor updated = exec.run(feed, {sweep.new_factors[i]})[0];
    feed[p.factors[i]->name] = updated;
    factor_values[i] = std::move(updated);
  }
  return before;
}

// ---- CP Gauss-Newton ----

GnState build_cpd_gauss_newton(const CpdProblem& problem) {
  GnState st;
  st.problem = problem;
  st.residual = sub(problem.input, problem.reconstruction);
  size_t n = problem.factors.size();
  std::vector<NodePtr> jvps;
  for (size_t i = 0; i < n; ++i) {
    NodePtr v = variable("__gn_v" + std::to_string(i), problem.factors[i]->shape);
    st.direction.push_back(v);
    jvps.push_back(jvp(v, problem.reconstruction, problem.factors[i]));
  }
  st.jvp_sum = optimize(add(std::move(jvps)));
  st.seed = variable("__gn_w", problem.reconstruction->shape);
  for (size_t i = 0; i < n; ++i)
    st.vjp_graphs.push_back(optimize(vjp(st.seed, problem.reconstruction, problem.factors[i])));
  for (auto& g : gradients(problem.loss, problem.factors))
    st.grad_graphs.push_back(optimize(g));
  return st;
}

GnStepResult cpd_gauss_newton_step(const GnState& st, Executor& exec,
                                   const DenseTensor& x,
                                   std::vector<DenseTensor>& factor_values) {
  const CpdProblem& p = st.problem;
  GnStepResult res;
  NodePtr loss_opt = optimize(p.loss);
  FeedDict feed = base_feed(p.factors, factor_values);
  feed["X"] = x;
  res.loss_before = exec.run(feed, {loss_opt})[0].scalar_value();

  size_t n = p.factors.size();
  std::vector<int64_t> sizes;
  int64_t total = 0;
  for (auto& f : factor_values) {
    sizes.push_back(f.size());
    total += f.size();
  }
  auto pack = [&](const std::vector<DenseTensor>& ts) {
    std::vector<double> v;
    v.reserve(static_cast<size_t>(total));
    for (auto& t : ts) v.insert(v.end(), t.values().begin(), t.values().end());
    return v;
  };
  auto unpack = [&](const std::vector<double>& v) {
    std::vector<DenseTensor> ts;
    size_t off = 0;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> part(v.begin() + static_cast<long>(off),
                               v.begin() + static_cast<long>(off) + sizes[i]);
      ts.emplace_back(p.factors[i]->shape, std::move(part));
      off += static_cast<size_t>(sizes[i]);
    }
    return ts;
  };

  // (J^T J + lambda I) d = -grad, normal operator applied via jvp then vjp
  auto normal_apply = [&](const std::vector<double>& d) {
    auto parts = unpack(d);
    FeedDict f2 = feed;
    for (size_t i = 0; i < n; ++i) f2[st.direction[i]->name] = parts[i];
    DenseTensor jd = exec.run(f2, {st.jvp_sum})[0];
    FeedDict f3 = feed;
    f3[st.seed->name] = jd;
    std::vector<DenseTensor> jtjd;
    for (size_t i = 0; i < n; ++i) jtjd.push_back(exec.run(f3, {st.vjp_graphs[i]})[0]);
    std::vector<double> out = pack(jtjd);
    for (size_t i = 0; i < out.size(); ++i) out[i] += st.lambda * d[i];
    return out;
  };

  std::vector<DenseTensor> grads;
  for (size_t i = 0; i < n; ++i) grads.push_back(exec.run(feed, {st.grad_graphs[i]})[0]);
  std::vector<double> b = pack(grads);
  for (auto& v : b) v = -v;

  std::vector<double> d(b.size(), 0.0), r = b, q = b;
  double rr = vec_dot(r, r);
  double b_norm = std::sqrt(vec_dot(b, b));
  res.cg_converged = false;
  for (int it = 0; it < st.cg_max_iters; ++it) {
    if (std::sqrt(rr) <= st.cg_tol * std::max(1.0, b_norm)) {
      res.cg_converged = true;
      break;
    }
    std::vector<double> aq = normal_apply(q);
    double alpha = rr / vec_dot(q, aq);
    for (size_t i = 0; i < d.size(); ++i) {
      d[i] += alpha * q[i];
      r[i] -= alpha * aq[i];
    }
    double rr2 = vec_dot(r, r);
    double beta = rr2 / rr;
    rr = rr2;
    for (size_t i = 0; i < q.size(); ++i) q[i] = r[i] + beta * q[i];
    res.cg_iters = it + 1;
  }
  if (std::sqrt(rr) <= st.cg_tol * std::max(1.0, b_norm)) res.cg_converged = true;

  // line halving so the step never increases the loss
  double alpha = 1.0;
  res.loss_after = res.loss_before;
  std::vector<double> base = pack(factor_values);
  for (int h = 0; h < 30; ++h) {
    std::vector<double> trial = base;
    for (size_t i = 0; i < trial.size(); ++i) trial[i] += alpha * d[i];
    auto parts = unpack(trial);
    FeedDict f2 = base_feed(p.factors, parts);
    f2["X"] = x;
    double l = exec.run(f2, {loss_opt})[0].scalar_value();
    if (l <= res.loss_before) {
      factor_values = std::move(parts);
      res.loss_after = l;
      break;
    }
    alpha *= 0.5;
  }
  return res;
}

// ---- Tucker ----

TuckerProblem tucker_graph(const Shape& extents, const Shape& ranks) {
  if (extents.size() != ranks.size() || extents.size() < 2)
    throw GraphError("tucker_graph: invalid problem size");
  TuckerProblem p;
  p.extents = extents;
  p.ranks = ranks;
  int64_t n = static_cast<int64_t>(extents.size());
  p.input = variable("X", extents);
  for (int64_t i = 0; i < n; ++i)
    p.factors.push_back(variable("A" + std::to_string(i + 1),
                                 {extents[static_cast<size_t>(i)],
                                  ranks[static_cast<size_t>(i)]}));
  // core G = X contracted with every factor; labels 0..n-1 modes, n..2n-1 ranks
  {
    EinsumSpec gs;
    std::vector<NodePtr> ins = {p.input};
    std::vector<AxisLabel> x_axes;
    for (int64_t i = 0; i < n; ++i) x_axes.push_back(static_cast<AxisLabel>(i));
    gs.operands.push_back(x_axes);
    for (int64_t i = 0; i < n; ++i) {
      gs.operands.push_back({static_cast<AxisLabel>(i), static_cast<AxisLabel>(n + i)});
      gs.output.push_back(static_cast<AxisLabel>(n + i));
      ins.push_back(p.factors[static_cast<size_t>(i)]);
    }
    p.core = make_einsum(std::move(gs), std::move(ins));
  }
  // reconstruction = core expanded back through the factors
  NodePtr recon;
  {
    EinsumSpec rs;
    std::vector<NodePtr> ins = {p.core};
    std::vector<AxisLabel> g_axes;
    for (int64_t i = 0; i < n; ++i) g_axes.push_back(static_cast<AxisLabel>(n + i));
    rs.operands.push_back(g_axes);
    for (int64_t i = 0; i < n; ++i) {
      rs.operands.push_back({static_cast<AxisLabel>(i), static_cast<AxisLabel>(n + i)});
      rs.output.push_back(static_cast<AxisLabel>(i));
      ins.push_back(p.factors[static_cast<size_t>(i)]);
    }
    recon = make_einsum(std::move(rs), std::move(ins));
  }
  NodePtr r = sub(p.input, recon);
  p.loss = scalar_mul(0.5, full_inner(r, r));

  // Y_n as the gradient of <X x_{r!=n} A_r^T, V_n>, so the sweep kernels come
  // out of the differentiator rather than being written by hand
  for (int64_t m = 0; m < n; ++m) {
    Shape vshape = {extents[static_cast<size_t>(m)]};
    for (int64_t i = 0; i < n; ++i)
      if (i != m) vshape.push_back(ranks[static_cast<size_t>(i)]);
    NodePtr v = variable("__ttmc_v" + std::to_string(m), vshape);
    EinsumSpec ts;
    std::vector<NodePtr> ins = {p.input};
    std::vector<AxisLabel> x_axes;
    for (int64_t i = 0; i < n; ++i) x_axes.push_back(static_cast<AxisLabel>(i));
    ts.operands.push_back(x_axes);
    std::vector<AxisLabel> v_axes = {static_cast<AxisLabel>(m)};
    for (int64_t i = 0; i < n; ++i) {
      if (i == m) continue;
      ts.operands.push_back({static_cast<AxisLabel>(i), static_cast<AxisLabel>(n + i)});
      ins.push_back(p.factors[static_cast<size_t>(i)]);
      v_axes.push_back(static_cast<AxisLabel>(n + i));
    }
    ts.operands.push_back(v_axes);
    ins.push_back(v);
    NodePtr t = make_einsum(std::move(ts), std::move(ins));
    p.ttmc.push_back(gradients(t, {v})[0]);
  }
  return p;
}

TuckerSweep build_tucker_sweep(const TuckerProblem& problem, bool dimension_tree) {
  TuckerSweep sweep;
  sweep.problem = problem;
  size_t n = problem.factors.size();
  std::vector<NodePtr> sinks;
  sinks.push_back(optimize(problem.loss, &sweep.report));
  for (size_t i = 0; i < n; ++i) {
    OptimizeOptions opts;
    if (dimension_tree) {
      opts.constrained_pivot = problem.input;
      for (size_t j = n; j-- > i + 1;) opts.constraint_order.push_back(problem.factors[j]);
      for (size_t j = 0; j < i; ++j) opts.constraint_order.push_back(problem.factors[j]);
    }
    sinks.push_back(optimize(problem.ttmc[i], &sweep.report, opts));
  }
  Graph g = cse(Graph(std::move(sinks)));
  sweep.sweep_graph = g;
  sweep.ttmc_opt.assign(g.sinks.begin() + 1, g.sinks.end());
  return sweep;
}

double tucker_ttmc_sweep(const TuckerSweep& sweep, Executor& exec, const DenseTensor& x,
                         std::vector<DenseTensor>& factor_values) {
  const TuckerProblem& p = sweep.problem;
  FeedDict feed = base_feed(p.factors, factor_values);
  feed["X"] = x;
  for (size_t m = 0; m < p.factors.size(); ++m) {
    DenseTensor y = exec.run(feed, {sweep.ttmc_opt[m]})[0];
    int64_t rows = y.shape()[0];
    int64_t cols = y.size() / rows;
    // gram matrix of the mode-m matricization
    std::vector<double> g(static_cast<size_t>(rows * rows), 0.0);
    for (int64_t a = 0; a < rows; ++a)
      for (int64_t b = 0; b <= a; ++b) {
        double s = 0.0;
        for (int64_t c = 0; c < cols; ++c) s += y[a * cols + c] * y[b * cols + c];
        g[static_cast<size_t>(a * rows + b)] = s;
        g[static_cast<size_t>(b * rows + a)] = s;
      }
    std::vector<double> evals, evecs;
    jacobi_eigh(g, rows, evals, evecs);
    int64_t rank = p.ranks[m];
    DenseTensor a({rows, rank});
    for (int64_t j = 0; j < rank; ++j) {
      int64_t src = rows - 1 - j;  // descending eigenvalue order
      for (int64_t i = 0; i < rows; ++i)
        a[i * rank + j] = evecs[static_cast<size_t>(src * rows + i)];
    }
    factor_values[m] = a;
    feed[p.factors[m]->name] = std::move(a);
  }
  return exec.run(feed, {sweep.sweep_graph.sinks[0]})[0].scalar_value();
}

// ---- DMRG ----

DmrgProblem dmrg_graph(int64_t sites, int64_t phys_extent, int64_t mpo_rank,
                       int64_t max_mps_rank) {
  if (sites < 2 || phys_extent < 2 || mpo_rank < 1)
    throw GraphError("dmrg_graph: invalid problem size");
  DmrgProblem p;
  p.sites = sites;
  p.phys.assign(static_cast<size_t>(sites), phys_extent);
  p.mpo_ranks.assign(static_cast<size_t>(sites) + 1, mpo_rank);
  p.mpo_ranks.front() = 1;
  p.mpo_ranks.back() = 1;
  p.mps_ranks.assign(static_cast<size_t>(sites) + 1, 1);
  for (int64_t i = 0; i <= sites; ++i) {
    double left = std::pow(static_cast<double>(phys_extent), static_cast<double>(i));
    double right = std::pow(static_cast<double>(phys_extent), static_cast<double>(sites - i));
    int64_t r = static_cast<int64_t>(std::llround(std::min(left, right)));
    if (max_mps_rank > 0) r = std::min(r, max_mps_rank);
    p.mps_ranks[static_cast<size_t>(i)] = r;
  }
  for (int64_t i = 0; i < sites; ++i) {
    p.mpo.push_back(variable("W" + std::to_string(i + 1),
                             {p.mpo_ranks[static_cast<size_t>(i)], phys_extent,
                              phys_extent, p.mpo_ranks[static_cast<size_t>(i) + 1]}));
    p.mps.push_back(variable("M" + std::to_string(i + 1),
                             {p.mps_ranks[static_cast<size_t>(i)], phys_extent,
                              p.mps_ranks[static_cast<size_t>(i) + 1]}));
  }

  // label layout: bra bonds a_i, mpo bonds m_i, ket bonds b_i, bra phys x_i,
  // ket phys y_i; boundary bonds have extent 1 and are summed out
  int64_t n = sites;
  auto a_bond = [&](int64_t i) { return static_cast<AxisLabel>(i); };
  auto m_bond = [&](int64_t i) { return static_cast<AxisLabel>(n + 1 + i); };
  auto b_bond = [&](int64_t i) { return static_cast<AxisLabel>(2 * (n + 1) + i); };
  auto x_phys = [&](int64_t i) { return static_cast<AxisLabel>(3 * (n + 1) + i); };
  auto y_phys = [&](int64_t i) { return static_cast<AxisLabel>(3 * (n + 1) + n + i); };
  {
    EinsumSpec num;
    std::vector<NodePtr> ins;
    for (int64_t i = 0; i < n; ++i) {
      num.operands.push_back({a_bond(i), x_phys(i), a_bond(i + 1)});
      ins.push_back(p.mps[static_cast<size_t>(i)]);
      num.operands.push_back({m_bond(i), x_phys(i), y_phys(i), m_bond(i + 1)});
      ins.push_back(p.mpo[static_cast<size_t>(i)]);
      num.operands.push_back({b_bond(i), y_phys(i), b_bond(i + 1)});
      ins.push_back(p.mps[static_cast<size_t>(i)]);
    }
    p.numerator = make_einsum(std::move(num), std::move(ins));
  }
  {
    EinsumSpec den;
    std::vector<NodePtr> ins;
    for (int64_t i = 0; i < n; ++i) {
      den.operands.push_back({a_bond(i), x_phys(i), a_bond(i + 1)});
      ins.push_back(p.mps[static_cast<size_t>(i)]);
      den.operands.push_back({b_bond(i), x_phys(i), b_bond(i + 1)});
      ins.push_back(p.mps[static_cast<size_t>(i)]);
    }
    p.denominator = make_einsum(std::move(den), std::move(ins));
  }
  p.objective = scalar_mul(p.numerator, scalar_inverse(p.denominator));
  return p;
}

DmrgLocalOp dmrg_local_hessian(const DmrgProblem& p, int64_t site_index) {
  const NodePtr& site = p.mps[static_cast<size_t>(site_index)];
  DmrgLocalOp op;
  op.hessian_graph = optimize(hessian(p.numerator, {site})[0][0]);
  op.norm_hessian = optimize(hessian(p.denominator, {site})[0][0]);
  op.direction = variable("__dmrg_d" + std::to_string(site_index), site->shape);
  op.hvp_graph = optimize(hvp(p.numerator, site, op.direction));
  return op;
}

DmrgSweepState build_dmrg_sweep(const DmrgProblem& p) {
  DmrgSweepState st;
  st.problem = p;
  std::vector<NodePtr> sinks;
  for (int64_t i = 0; i < p.sites; ++i) {
    st.local_ops.push_back(dmrg_local_hessian(p, i));
    sinks.push_back(st.local_ops.back().hessian_graph);
    sinks.push_back(st.local_ops.back().norm_hessian);
  }
  sinks.push_back(optimize(p.objective));
  st.sweep_graph = cse(Graph(std::move(sinks)));
  return st;
}

DmrgSweepResult dmrg_sweep(const DmrgSweepState& st, Executor& exec,
                           const std::vector<DenseTensor>& mpo_values,
                           std::vector<DenseTensor>& mps_values) {
  const DmrgProblem& p = st.problem;
  FeedDict feed;
  for (int64_t i = 0; i < p.sites; ++i) {
    feed[p.mpo[static_cast<size_t>(i)]->name] = mpo_values[static_cast<size_t>(i)];
    feed[p.mps[static_cast<size_t>(i)]->name] = mps_values[static_cast<size_t>(i)];
  }
  NodePtr objective = st.sweep_graph.sinks.back();

  std::vector<int64_t> schedule;
  for (int64_t i = 0; i < p.sites; ++i) schedule.push_back(i);
  for (int64_t i = p.sites - 2; i >= 0; --i) schedule.push_back(i);

  DmrgSweepResult result;
  for (int64_t site : schedule) {
    const DmrgLocalOp& op = st.local_ops[static_cast<size_t>(site)];
    DenseTensor hval = exec.run(feed, {op.hessian_graph})[0];
    DenseTensor nval = exec.run(feed, {op.norm_hessian})[0];
    int64_t dim = p.mps[static_cast<size_t>(site)]->shape[0] * p.phys[0] *
                  p.mps[static_cast<size_t>(site)]->shape[2];

    // whiten the gauge metric: solve inv(sqrt(N)) H inv(sqrt(N)) u = lambda u
    std::vector<double> nmat(nval.values());
    std::vector<double> evals, evecs;
    jacobi_eigh(nmat, dim, evals, evecs);
    std::vector<double> nihalf(static_cast<size_t>(dim * dim), 0.0);
    for (int64_t k = 0; k < dim; ++k) {
      double lam = std::max(evals[static_cast<size_t>(k)], 0.0) + 1e-12;
      double w = 1.0 / std::sqrt(lam);
      for (int64_t i = 0; i < dim; ++i)
        for (int64_t j = 0; j < dim; ++j)
          nihalf[static_cast<size_t>(i * dim + j)] +=
              w * evecs[static_cast<size_t>(k * dim + i)] *
              evecs[static_cast<size_t>(k * dim + j)];
    }
    auto apply_mat = [&](const std::vector<double>& m, const std::vector<double>& v) {
      std::vector<double> out(static_cast<size_t>(dim), 0.0);
      for (int64_t i = 0; i < dim; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < dim; ++j)
          s += m[static_cast<size_t>(i * dim + j)] * v[static_cast<size_t>(j)];
        out[static_cast<size_t>(i)] = s;
      }
      return out;
    };

    std::vector<double> u;
    if (dim <= 64) {
      std::vector<double> ht(static_cast<size_t>(dim * dim), 0.0);
      const std::vector<double>& h = hval.values();
      for (int64_t i = 0; i < dim; ++i)
        for (int64_t j = 0; j < dim; ++j) {
          double s = 0.0;
          for (int64_t a = 0; a < dim; ++a)
            for (int64_t b = 0; b < dim; ++b)
              s += nihalf[static_cast<size_t>(i * dim + a)] *
                   h[static_cast<size_t>(a * dim + b)] *
                   nihalf[static_cast<size_t>(b * dim + j)];
          ht[static_cast<size_t>(i * dim + j)] = s;
        }
      std::vector<double> hevals, hevecs;
      jacobi_eigh(ht, dim, hevals, hevecs);
      u.assign(hevecs.begin(), hevecs.begin() + dim);
    } else {
      auto matvec = [&](const std::vector<double>& v, std::vector<double>& out) {
        std::vector<double> w = apply_mat(nihalf, v);
        FeedDict f2 = feed;
        f2[op.direction->name] =
            DenseTensor(p.mps[static_cast<size_t>(site)]->shape, w);
        DenseTensor hv = exec.run(f2, {op.hvp_graph})[0];
        out = apply_mat(nihalf, hv.values());
      };
      LanczosResult lr = lanczos_smallest(matvec, dim);
      u = lr.eigenvector;
    }
    std::vector<double> v = apply_mat(nihalf, u);
    // scale so <psi|psi> stays 1: denominator hessian is twice the metric
    std::vector<double> nv = apply_mat(nval.values(), v);
    double norm = std::sqrt(0.5 * vec_dot(v, nv));
    for (auto& val : v) val /= norm;

    DenseTensor updated(p.mps[static_cast<size_t>(site)]->shape, std::move(v));
    feed[p.mps[static_cast<size_t>(site)]->name] = updated;
    mps_values[static_cast<size_t>(site)] = std::move(updated);
    result.rayleigh_trace.push_back(exec.run(feed, {objective})[0].scalar_value());
  }
  result.eigenvalue = result.rayleigh_trace.back();
  return result;
}

}  // namespace einopt
