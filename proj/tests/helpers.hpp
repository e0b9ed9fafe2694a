#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "einopt/autodiff.hpp"
#include "einopt/executor.hpp"
#include "einopt/graph.hpp"

namespace testutil {

using namespace einopt;

inline double rel_err(const DenseTensor& a, const DenseTensor& b) {
  double num = 0.0, den = 0.0;
  if (a.size() != b.size()) return 1e300;
  for (int64_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<NodePtr> graph_variables(const Graph& g) {
  std::vector<NodePtr> vars;
  for (auto& n : topo_order(g.sinks))
    if (n->kind == NodeKind::Variable) vars.push_back(n);
  return vars;
}

inline FeedDict random_feed(const Graph& g, uint64_t seed) {
  CounterRng rng(seed);
  FeedDict feed;
  for (auto& v : graph_variables(g)) feed[v->name] = rng.tensor(v->shape);
  return feed;
}

inline double eval_scalar(const NodePtr& n, const FeedDict& feed) {
  DenseTensor t = evaluate(n, feed);
  return t[0];
}

// central finite-difference gradient of a scalar node w.r.t. one variable
inline DenseTensor fd_gradient(const NodePtr& scalar, const NodePtr& var, FeedDict feed,
                               double h = 1e-5) {
  DenseTensor g(var->shape);
  DenseTensor& x = feed[var->name];
  for (int64_t i = 0; i < x.size(); ++i) {
    double saved = x[i];
    x[i] = saved + h;
    double fp = eval_scalar(scalar, feed);
    x[i] = saved - h;
    double fm = eval_scalar(scalar, feed);
    x[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// central finite-difference directional derivative of an arbitrary output
inline DenseTensor fd_jvp(const NodePtr& out, const NodePtr& var, FeedDict feed,
                          const DenseTensor& dir, double h = 1e-5) {
  DenseTensor& x = feed[var->name];
  DenseTensor x0 = x;
  for (int64_t i = 0; i < x.size(); ++i) x[i] = x0[i] + h * dir[i];
  DenseTensor fp = evaluate(out, feed);
  for (int64_t i = 0; i < x.size(); ++i) x[i] = x0[i] - h * dir[i];
  DenseTensor fm = evaluate(out, feed);
  DenseTensor r(fp.shape());
  for (int64_t i = 0; i < r.size(); ++i) r[i] = (fp[i] - fm[i]) / (2.0 * h);
  return r;
}

inline double dot(const DenseTensor& a, const DenseTensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace testutil
