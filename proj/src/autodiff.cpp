#include "einopt/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <set>

namespace einopt {

namespace {

NodePtr ones_vector(int64_t extent) {
  return constant(DenseTensor({extent}, std::vector<double>(static_cast<size_t>(extent), 1.0)));
}

NodePtr mul_scalars(NodePtr a, NodePtr b) {
  EinsumSpec s;
  s.operands = {{}, {}};
  return make_einsum(std::move(s), {std::move(a), std::move(b)});
}

// full contraction <a, b> over identical shapes
NodePtr inner_product(NodePtr a, NodePtr b) {
  if (a->shape != b->shape) throw AutodiffError("inner product shape mismatch");
  EinsumSpec s;
  std::vector<AxisLabel> axes;
  for (int64_t i = 0; i < a->order(); ++i) axes.push_back(static_cast<AxisLabel>(i));
  s.operands = {axes, axes};
  return make_einsum(std::move(s), {std::move(a), std::move(b)});
}

// adjoint of operand k of an einsum: contract the incoming adjoint with the
// other operands, producing operand k's index structure; axes summed away by
// the einsum pick up an all-ones operand
NodePtr einsum_operand_vjp(const NodePtr& n, const NodePtr& w, size_t k) {
  const EinsumSpec& sp = n->spec;
  std::set<AxisLabel> mine(sp.operands[k].begin(), sp.operands[k].end());
  if (mine.size() != sp.operands[k].size())
    throw AutodiffError(
        "gradient through an einsum operand with repeated subscripts is unsupported");
  EinsumSpec vs;
  vs.extents = sp.extents;
  vs.operands.push_back(sp.output);
  std::vector<NodePtr> inputs = {w};
  std::set<AxisLabel> covered(sp.output.begin(), sp.output.end());
  for (size_t j = 0; j < sp.operands.size(); ++j) {
    if (j == k) continue;
    vs.operands.push_back(sp.operands[j]);
    inputs.push_back(n->inputs[j]);
    covered.insert(sp.operands[j].begin(), sp.operands[j].end());
  }
  for (AxisLabel l : sp.operands[k]) {
    if (covered.count(l)) continue;
    vs.operands.push_back({l});
    inputs.push_back(ones_vector(sp.extents.at(l)));
  }
  vs.output = sp.operands[k];
  return make_einsum(std::move(vs), std::move(inputs));
}

// adjoint of T for Y = inv(T): -Y^T W Y^T in matricized form, expressed over
// the row/column axis groups
NodePtr tensor_inverse_vjp(const NodePtr& n, const NodePtr& w) {
  const NodePtr& y = n;  // the inverse itself, shape (col group, row group)
  int64_t half = n->order() / 2;
  auto block = [&](int base) {
    std::vector<AxisLabel> v;
    for (int64_t i = 0; i < half; ++i) v.push_back(base + static_cast<AxisLabel>(i));
    return v;
  };
  std::vector<AxisLabel> r = block(0), c = block(static_cast<int>(half)),
                         r2 = block(static_cast<int>(2 * half)),
                         c2 = block(static_cast<int>(3 * half));
  auto cat = [](std::vector<AxisLabel> a, const std::vector<AxisLabel>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  EinsumSpec s;
  s.operands = {cat(c, r), cat(c, r2), cat(c2, r2)};
  s.output = cat(r, c2);
  return negate(make_einsum(std::move(s), {y, w, y}));
}

using ContribMap = std::map<std::string, std::vector<NodePtr>>;

void add_contrib(ContribMap& m, const NodePtr& target, NodePtr value) {
  m[target->uid].push_back(std::move(value));
}

// reverse sweep; returns the combined adjoint of every reachable node that
// has one
std::map<std::string, NodePtr> reverse_adjoints(const NodePtr& output, const NodePtr& seed) {
  ContribMap contrib;
  add_contrib(contrib, output, seed);
  std::map<std::string, NodePtr> adj;
  auto order = topo_order({output});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodePtr& n = *it;
    auto c = contrib.find(n->uid);
    if (c == contrib.end()) continue;
    NodePtr w = add(c->second);
    adj[n->uid] = w;
    switch (n->kind) {
      case NodeKind::Variable:
      case NodeKind::Constant:
      case NodeKind::Identity: break;
      case NodeKind::Einsum:
        for (size_t k = 0; k < n->inputs.size(); ++k)
          add_contrib(contrib, n->inputs[k], einsum_operand_vjp(n, w, k));
        break;
      case NodeKind::Add:
        for (auto& in : n->inputs) add_contrib(contrib, in, w);
        break;
      case NodeKind::Sub:
        add_contrib(contrib, n->inputs[0], w);
        add_contrib(contrib, n->inputs[1], negate(w));
        break;
      case NodeKind::Negate: add_contrib(contrib, n->inputs[0], negate(w)); break;
      case NodeKind::ScalarMul:
        add_contrib(contrib, n->inputs[0], scalar_mul(n->scalar, w));
        break;
      case NodeKind::ScalarInverse:
        // d(1/x)/dx = -1/x^2
        add_contrib(contrib, n->inputs[0], negate(mul_scalars(w, mul_scalars(n, n))));
        break;
      case NodeKind::TensorInverse:
        add_contrib(contrib, n->inputs[0], tensor_inverse_vjp(n, w));
        break;
      case NodeKind::Transpose: {
        std::vector<int> inv(n->perm.size());
        for (size_t i = 0; i < n->perm.size(); ++i)
          inv[static_cast<size_t>(n->perm[i])] = static_cast<int>(i);
        add_contrib(contrib, n->inputs[0], transpose(w, inv));
        break;
      }
      case NodeKind::Clone: add_contrib(contrib, n->inputs[0], w); break;
    }
  }
  return adj;
}

std::atomic<uint64_t> gensym_counter{0};

}  // namespace

std::vector<NodePtr> gradients(const NodePtr& output, const std::vector<NodePtr>& wrt) {
  if (output->order() != 0)
    throw AutodiffError("gradients requires a scalar output, got order " +
                        std::to_string(output->order()));
  auto adj = reverse_adjoints(output, constant(DenseTensor::scalar(1.0)));
  std::vector<NodePtr> out;
  for (auto& w : wrt) {
    auto it = adj.find(w->uid);
    out.push_back(it == adj.end() ? zeros(w->shape) : it->second);
  }
  return out;
}

NodePtr vjp(const NodePtr& v, const NodePtr& output, const NodePtr& wrt) {
  if (v->shape != output->shape)
    throw AutodiffError("vjp seed shape " + shape_to_string(v->shape) +
                        " does not match output shape " + shape_to_string(output->shape));
  auto adj = reverse_adjoints(output, v);
  auto it = adj.find(wrt->uid);
  return it == adj.end() ? zeros(wrt->shape) : it->second;
}

NodePtr jvp(const NodePtr& v, const NodePtr& output, const NodePtr& wrt) {
  if (v->shape != wrt->shape)
    throw AutodiffError("jvp direction shape " + shape_to_string(v->shape) +
                        " does not match wrt shape " + shape_to_string(wrt->shape));
  NodePtr u = variable("__jvp_u" + std::to_string(gensym_counter++), output->shape);
  NodePtr g = vjp(u, output, wrt);  // J^T u, linear in u
  return vjp(v, g, u);              // (J^T)^T v = J v
}

NodePtr hvp(const NodePtr& output, const NodePtr& wrt, const NodePtr& v) {
  if (v->shape != wrt->shape)
    throw AutodiffError("hvp direction shape does not match wrt shape");
  NodePtr g = gradients(output, {wrt})[0];
  return gradients(inner_product(g, v), {wrt})[0];
}

namespace {

// J of a node w.r.t. itself: one delta per output axis
NodePtr jacobian_seed(const NodePtr& out) {
  if (out->order() == 0) return constant(DenseTensor::scalar(1.0));
  EinsumSpec s;
  std::vector<NodePtr> inputs;
  int64_t k = out->order();
  for (int64_t i = 0; i < k; ++i) {
    s.operands.push_back({static_cast<AxisLabel>(i), static_cast<AxisLabel>(k + i)});
    inputs.push_back(identity(out->shape[static_cast<size_t>(i)]));
  }
  for (int64_t i = 0; i < 2 * k; ++i) s.output.push_back(static_cast<AxisLabel>(i));
  return make_einsum(std::move(s), std::move(inputs));
}

// Jacobian chain rule through an einsum: contract the downstream Jacobian
// with the other operands and one delta per axis of operand k. Deltas that a
// later pruning pass removes reproduce the compact closed forms.
NodePtr einsum_operand_jacobian(const NodePtr& n, const NodePtr& j, int64_t s_len, size_t k) {
  const EinsumSpec& sp = n->spec;
  AxisLabel next = 0;
  for (auto& [l, e] : sp.extents) next = std::max(next, l + 1);
  std::vector<AxisLabel> s_axes, primed;
  for (int64_t i = 0; i < s_len; ++i) s_axes.push_back(next + static_cast<AxisLabel>(i));
  for (size_t t = 0; t < sp.operands[k].size(); ++t)
    primed.push_back(next + static_cast<AxisLabel>(s_len) + static_cast<AxisLabel>(t));

  EinsumSpec js;
  std::vector<AxisLabel> j_axes = s_axes;
  j_axes.insert(j_axes.end(), sp.output.begin(), sp.output.end());
  js.operands.push_back(std::move(j_axes));
  std::vector<NodePtr> inputs = {j};
  for (size_t t = 0; t < sp.operands.size(); ++t) {
    if (t == k) continue;
    js.operands.push_back(sp.operands[t]);
    inputs.push_back(n->inputs[t]);
  }
  for (size_t t = 0; t < sp.operands[k].size(); ++t) {
    AxisLabel l = sp.operands[k][t];
    js.operands.push_back({l, primed[t]});
    inputs.push_back(identity(sp.extents.at(l)));
  }
  js.output = s_axes;
  js.output.insert(js.output.end(), primed.begin(), primed.end());
  return make_einsum(std::move(js), std::move(inputs));
}

}  // namespace

std::vector<NodePtr> jacobian(const NodePtr& output, const std::vector<NodePtr>& wrt) {
  ContribMap contrib;
  add_contrib(contrib, output, jacobian_seed(output));
  int64_t s_len = output->order();
  std::map<std::string, NodePtr> jac;
  auto order = topo_order({output});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodePtr& n = *it;
    auto c = contrib.find(n->uid);
    if (c == contrib.end()) continue;
    NodePtr j = add(c->second);
    jac[n->uid] = j;
    switch (n->kind) {
      case NodeKind::Variable:
      case NodeKind::Constant:
      case NodeKind::Identity: break;
      case NodeKind::Einsum:
        for (size_t k = 0; k < n->inputs.size(); ++k)
          add_contrib(contrib, n->inputs[k], einsum_operand_jacobian(n, j, s_len, k));
        break;
      case NodeKind::Add:
        for (auto& in : n->inputs) add_contrib(contrib, in, j);
        break;
      case NodeKind::Sub:
        add_contrib(contrib, n->inputs[0], j);
        add_contrib(contrib, n->inputs[1], negate(j));
        break;
      case NodeKind::Negate: add_contrib(contrib, n->inputs[0], negate(j)); break;
      case NodeKind::ScalarMul:
        add_contrib(contrib, n->inputs[0], scalar_mul(n->scalar, j));
        break;
      case NodeKind::Transpose: {
        // trailing axes of j carry the permuted input axes
        std::vector<int> fp;
        for (int64_t i = 0; i < s_len; ++i) fp.push_back(static_cast<int>(i));
        std::vector<int> inv(n->perm.size());
        for (size_t i = 0; i < n->perm.size(); ++i)
          inv[static_cast<size_t>(n->perm[i])] = static_cast<int>(i);
        for (int p : inv) fp.push_back(static_cast<int>(s_len) + p);
        add_contrib(contrib, n->inputs[0], transpose(j, fp));
        break;
      }
      case NodeKind::Clone: add_contrib(contrib, n->inputs[0], j); break;
      default:
        throw AutodiffError(std::string("explicit jacobian through node kind '") +
                            kind_name(n->kind) + "' is unsupported");
    }
  }
  std::vector<NodePtr> out;
  for (auto& w : wrt) {
    auto it = jac.find(w->uid);
    if (it != jac.end()) {
      out.push_back(it->second);
    } else {
      Shape s = output->shape;
      s.insert(s.end(), w->shape.begin(), w->shape.end());
      out.push_back(zeros(s));
    }
  }
  return out;
}

std::vector<std::vector<NodePtr>> hessian(const NodePtr& output,
                                          const std::vector<NodePtr>& wrt) {
  std::vector<NodePtr> grads = gradients(output, wrt);
  std::vector<std::vector<NodePtr>> h;
  for (auto& g : grads) h.push_back(jacobian(g, wrt));
  return h;
}

}  // namespace einopt
