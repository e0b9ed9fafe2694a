#include "einopt/executor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "einopt/linalg.hpp"
#include "einopt/optimizer.hpp"

namespace einopt {

namespace {

std::vector<int64_t> strides_of(const Shape& shape) {
  std::vector<int64_t> s(shape.size(), 1);
  for (size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// advances a multi-index over `shape`, returns false after the last one
bool advance(std::vector<int64_t>& idx, const Shape& shape) {
  for (size_t i = idx.size(); i-- > 0;) {
    if (++idx[i] < shape[i]) return true;
    idx[i] = 0;
  }
  return false;
}

}  // namespace

DenseTensor identity_tensor(int64_t extent) {
  DenseTensor t({extent, extent});
  for (int64_t i = 0; i < extent; ++i) t[i * extent + i] = 1.0;
  return t;
}

DenseTensor permute(const DenseTensor& t, const std::vector<int>& perm) {
  if (static_cast<int64_t>(perm.size()) != t.order())
    throw ExecError("permute: permutation length mismatch");
  Shape out_shape;
  for (int p : perm) out_shape.push_back(t.shape()[p]);
  DenseTensor out(out_shape);
  if (out.size() == 0) return out;
  auto in_strides = strides_of(t.shape());
  std::vector<int64_t> step(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) step[i] = in_strides[static_cast<size_t>(perm[i])];
  std::vector<int64_t> idx(perm.size(), 0);
  int64_t o = 0;
  do {
    int64_t off = 0;
    for (size_t i = 0; i < idx.size(); ++i) off += idx[i] * step[i];
    out[o++] = t[off];
  } while (advance(idx, out_shape));
  return out;
}

DenseTensor einsum_single(const DenseTensor& a, const std::vector<AxisLabel>& axes,
                          const std::vector<AxisLabel>& output) {
  if (static_cast<int64_t>(axes.size()) != a.order())
    throw ExecError("einsum_single: axis count mismatch");
  std::map<AxisLabel, int64_t> extents;
  for (size_t i = 0; i < axes.size(); ++i) {
    auto [it, fresh] = extents.emplace(axes[i], a.shape()[i]);
    if (!fresh && it->second != a.shape()[i])
      throw ExecError("einsum_single: extent conflict on repeated axis");
  }
  std::vector<AxisLabel> loop_labels;  // output labels first, then summed
  std::set<AxisLabel> out_set(output.begin(), output.end());
  for (AxisLabel l : output) {
    if (!extents.count(l)) throw ExecError("einsum_single: output axis not in operand");
    loop_labels.push_back(l);
  }
  for (auto& [l, e] : extents)
    if (!out_set.count(l)) loop_labels.push_back(l);

  Shape loop_shape, out_shape;
  for (AxisLabel l : loop_labels) loop_shape.push_back(extents.at(l));
  for (AxisLabel l : output) out_shape.push_back(extents.at(l));
  DenseTensor out(out_shape);
  auto out_strides = strides_of(out_shape);
  auto in_strides = strides_of(a.shape());

  // per loop label, accumulated input stride and output stride
  std::vector<int64_t> in_step(loop_labels.size(), 0), out_step(loop_labels.size(), 0);
  for (size_t i = 0; i < axes.size(); ++i) {
    size_t pos = static_cast<size_t>(
        std::find(loop_labels.begin(), loop_labels.end(), axes[i]) - loop_labels.begin());
    in_step[pos] += in_strides[i];
  }
  for (size_t i = 0; i < output.size(); ++i) out_step[i] = out_strides[i];

  std::vector<int64_t> idx(loop_labels.size(), 0);
  do {
    int64_t in_off = 0, out_off = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
      in_off += idx[i] * in_step[i];
      out_off += idx[i] * out_step[i];
    }
    out[out_off] += a[in_off];
  } while (advance(idx, loop_shape));
  return out;
}

void gemm_accumulate(int64_t m, int64_t n, int64_t k, const double* a,
                     const double* b, double* c) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

DenseTensor contract_pair(const DenseTensor& a_in, const DenseTensor& b_in,
                          const EinsumSpec& spec) {
  if (spec.arity() != 2) throw ExecError("contract_pair: spec arity must be 2");

  std::set<AxisLabel> out_set(spec.output.begin(), spec.output.end());
  auto labels_of = [](const std::vector<AxisLabel>& axes) {
    std::set<AxisLabel> s(axes.begin(), axes.end());
    return s;
  };
  std::set<AxisLabel> la = labels_of(spec.operands[0]);
  std::set<AxisLabel> lb = labels_of(spec.operands[1]);

  // per operand: keep labels that matter downstream, collapsing diagonals and
  // summing the rest up front
  auto reduce = [&](const DenseTensor& t, const std::vector<AxisLabel>& axes,
                    const std::set<AxisLabel>& other) {
    std::vector<AxisLabel> kept;
    std::set<AxisLabel> seen;
    for (AxisLabel l : axes) {
      if (seen.insert(l).second && (other.count(l) || out_set.count(l))) kept.push_back(l);
    }
    return std::make_pair(einsum_single(t, axes, kept), kept);
  };
  auto [a, a_labels] = reduce(a_in, spec.operands[0], lb);
  auto [b, b_labels] = reduce(b_in, spec.operands[1], la);

  std::vector<AxisLabel> batch, con, fa, fb;
  for (AxisLabel l : a_labels) {
    bool in_b = std::count(b_labels.begin(), b_labels.end(), l) > 0;
    if (in_b && out_set.count(l)) batch.push_back(l);
    else if (in_b) con.push_back(l);
    else fa.push_back(l);
  }
  for (AxisLabel l : b_labels) {
    if (std::count(a_labels.begin(), a_labels.end(), l)) continue;
    fb.push_back(l);
  }

  auto perm_to = [](const std::vector<AxisLabel>& have,
                    const std::vector<AxisLabel>& want) {
    std::vector<int> p;
    for (AxisLabel l : want)
      p.push_back(static_cast<int>(std::find(have.begin(), have.end(), l) - have.begin()));
    return p;
  };
  std::vector<AxisLabel> a_order = batch;
  a_order.insert(a_order.end(), fa.begin(), fa.end());
  a_order.insert(a_order.end(), con.begin(), con.end());
  std::vector<AxisLabel> b_order = batch;
  b_order.insert(b_order.end(), con.begin(), con.end());
  b_order.insert(b_order.end(), fb.begin(), fb.end());
  DenseTensor at = permute(a, perm_to(a_labels, a_order));
  DenseTensor bt = permute(b, perm_to(b_labels, b_order));

  auto prod = [&](const std::vector<AxisLabel>& ls) {
    int64_t p = 1;
    for (AxisLabel l : ls) p *= spec.extents.at(l);
    return p;
  };
  int64_t nb = prod(batch), m = prod(fa), k = prod(con), n = prod(fb);

  std::vector<AxisLabel> res_labels = batch;
  res_labels.insert(res_labels.end(), fa.begin(), fa.end());
  res_labels.insert(res_labels.end(), fb.begin(), fb.end());
  Shape res_shape;
  for (AxisLabel l : res_labels) res_shape.push_back(spec.extents.at(l));
  DenseTensor res(res_shape);
  for (int64_t bi = 0; bi < nb; ++bi) {
    gemm_accumulate(m, n, k, at.data() + bi * m * k, bt.data() + bi * k * n,
                    res.data() + bi * m * n);
  }
  return permute(res, perm_to(res_labels, spec.output));
}

DenseTensor tensor_inverse_value(const DenseTensor& t) {
  int64_t ord = t.order();
  if (ord == 0 || ord % 2 != 0)
    throw ExecError("tensor inverse input must have positive even order");
  int64_t half = ord / 2, r = 1;
  for (int64_t i = 0; i < half; ++i) r *= t.shape()[i];
  int64_t r2 = 1;
  for (int64_t i = half; i < ord; ++i) r2 *= t.shape()[i];
  if (r != r2) throw ExecError("tensor inverse matricization is not square");
  std::vector<double> m = t.values();
  invert_matrix(m, r);
  Shape out_shape(t.shape().begin() + half, t.shape().end());
  out_shape.insert(out_shape.end(), t.shape().begin(), t.shape().begin() + half);
  return DenseTensor(std::move(out_shape), std::move(m));
}

namespace {

DenseTensor eval_einsum(const Node& n, const std::vector<DenseTensor>& ins) {
  if (n.spec.arity() == 1) return einsum_single(ins[0], n.spec.operands[0], n.spec.output);
  if (n.spec.arity() == 2) return contract_pair(ins[0], ins[1], n.spec);
  ContractionPlan plan = plan_for(n.spec, [&] {
    std::vector<bool> d;
    for (auto& in : n.inputs) d.push_back(in->kind == NodeKind::Identity);
    return d;
  }());
  std::vector<DenseTensor> work = ins;
  std::vector<std::vector<AxisLabel>> work_axes = n.spec.operands;
  for (auto& step : plan.steps) {
    DenseTensor r = contract_pair(work[static_cast<size_t>(step.lhs)],
                                  work[static_cast<size_t>(step.rhs)], step.spec);
    size_t hi = static_cast<size_t>(std::max(step.lhs, step.rhs));
    size_t lo = static_cast<size_t>(std::min(step.lhs, step.rhs));
    work.erase(work.begin() + static_cast<long>(hi));
    work.erase(work.begin() + static_cast<long>(lo));
    work.push_back(std::move(r));
  }
  if (work.size() != 1) throw ExecError("contraction plan did not reduce to one tensor");
  return std::move(work[0]);
}

}  // namespace

std::vector<DenseTensor> Executor::run(const FeedDict& feed,
                                       const std::vector<NodePtr>& out) {
  stats_ = RunStats{};
  std::map<std::string, DenseTensor> memo;
  for (auto& n : topo_order(out)) {
    std::vector<const DenseTensor*> in_ptrs;
    for (auto& in : n->inputs) in_ptrs.push_back(&memo.at(in->uid));

    DenseTensor v;
    switch (n->kind) {
      case NodeKind::Variable: {
        auto it = feed.find(n->name);
        if (it == feed.end())
          throw ExecError("missing feed for variable '" + n->name + "'");
        if (it->second.shape() != n->shape)
          throw ExecError("feed for variable '" + n->name + "' has shape " +
                          shape_to_string(it->second.shape()) + ", expected " +
                          shape_to_string(n->shape));
        v = it->second;
        break;
      }
      case NodeKind::Constant: v = n->value; break;
      case NodeKind::Identity: v = identity_tensor(n->extent); break;
      case NodeKind::Einsum: {
        std::vector<DenseTensor> vals;
        for (auto* p : in_ptrs) vals.push_back(*p);
        v = eval_einsum(*n, vals);
        break;
      }
      case NodeKind::Add: {
        v = *in_ptrs[0];
        for (size_t i = 1; i < in_ptrs.size(); ++i)
          for (int64_t j = 0; j < v.size(); ++j) v[j] += (*in_ptrs[i])[j];
        break;
      }
      case NodeKind::Sub: {
        v = *in_ptrs[0];
        for (int64_t j = 0; j < v.size(); ++j) v[j] -= (*in_ptrs[1])[j];
        break;
      }
      case NodeKind::Negate: {
        v = *in_ptrs[0];
        for (int64_t j = 0; j < v.size(); ++j) v[j] = -v[j];
        break;
      }
      case NodeKind::ScalarMul: {
        v = *in_ptrs[0];
        for (int64_t j = 0; j < v.size(); ++j) v[j] *= n->scalar;
        break;
      }
      case NodeKind::ScalarInverse: {
        double x = in_ptrs[0]->scalar_value();
        if (x == 0.0) throw ExecError("scalar inverse of zero");
        v = DenseTensor::scalar(1.0 / x);
        break;
      }
      case NodeKind::TensorInverse: v = tensor_inverse_value(*in_ptrs[0]); break;
      case NodeKind::Transpose: v = permute(*in_ptrs[0], n->perm); break;
      case NodeKind::Clone: v = *in_ptrs[0]; break;
    }
    if (v.shape() != n->shape)
      throw ExecError(std::string("internal: evaluated shape mismatch on ") +
                      kind_name(n->kind) + " node");
    stats_.eval_count[n->uid] += 1;
    memo.emplace(n->uid, std::move(v));
  }
  std::vector<DenseTensor> results;
  for (auto& o : out) results.push_back(memo.at(o->uid));
  return results;
}

DenseTensor evaluate(const NodePtr& node, const FeedDict& feed) {
  Executor exec({node});
  return exec.run(feed)[0];
}

}  // namespace einopt
