#include "einopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"

namespace einopt {

namespace {

// Bottom-up rebuild with a memo shared across sinks. f sees the original node
// plus already-transformed inputs.
template <class F>
NodePtr transform_node(const NodePtr& sink, std::map<std::string, NodePtr>& memo, F&& f) {
  for (auto& n : topo_order({sink})) {
    if (memo.count(n->uid)) continue;
    std::vector<NodePtr> ins;
    for (auto& in : n->inputs) ins.push_back(memo.at(in->uid));
    memo[n->uid] = f(n, std::move(ins));
  }
  return memo.at(sink->uid);
}

template <class F>
Graph transform_graph(const Graph& g, F&& f) {
  std::map<std::string, NodePtr> memo;
  std::vector<NodePtr> sinks;
  for (auto& s : g.sinks) sinks.push_back(transform_node(s, memo, f));
  return Graph(std::move(sinks));
}

NodePtr rebuild(const NodePtr& n, std::vector<NodePtr> ins) {
  switch (n->kind) {
    case NodeKind::Variable:
    case NodeKind::Constant:
    case NodeKind::Identity: return n;
    case NodeKind::Einsum: return make_einsum(n->spec, std::move(ins));
    case NodeKind::Add: return add(std::move(ins));
    case NodeKind::Sub: return sub(ins[0], ins[1]);
    case NodeKind::Negate: return negate(ins[0]);
    case NodeKind::ScalarMul: return scalar_mul(n->scalar, ins[0]);
    case NodeKind::ScalarInverse: return scalar_inverse(ins[0]);
    case NodeKind::TensorInverse: return tensor_inverse(ins[0]);
    case NodeKind::Transpose: return transpose(ins[0], n->perm);
    case NodeKind::Clone: return clone(ins[0]);
  }
  throw GraphError("rebuild: unknown node kind");
}

NodePtr apply_coeff(double c, NodePtr n) {
  if (c == 1.0) return n;
  if (c == -1.0) return negate(std::move(n));
  return scalar_mul(c, std::move(n));
}

}  // namespace

// ---- contraction paths ----

int64_t flop_count(const ContractionPlan& plan) { return plan.total_flops; }

namespace {

struct PItem {
  std::vector<AxisLabel> axes;  // ordered, matches the physical tensor
  std::set<AxisLabel> labels;   // distinct
  bool is_delta = false;
  std::vector<int> key;  // sorted original operand indices, deterministic tie-break
};

std::vector<PItem> make_items(const EinsumSpec& spec, const std::vector<bool>& is_delta) {
  std::vector<PItem> items;
  for (size_t i = 0; i < spec.operands.size(); ++i) {
    PItem it;
    it.axes = spec.operands[i];
    it.labels.insert(it.axes.begin(), it.axes.end());
    it.is_delta = i < is_delta.size() && is_delta[i];
    it.key = {static_cast<int>(i)};
    items.push_back(std::move(it));
  }
  return items;
}

int64_t label_prod(const std::set<AxisLabel>& labels,
                   const std::map<AxisLabel, int64_t>& ext) {
  int64_t p = 1;
  for (AxisLabel l : labels) p *= ext.at(l);
  return p;
}

int64_t step_cost(const PItem& a, const PItem& b, const std::map<AxisLabel, int64_t>& ext) {
  if (a.is_delta || b.is_delta) return 0;
  std::set<AxisLabel> u = a.labels;
  u.insert(b.labels.begin(), b.labels.end());
  return 2 * label_prod(u, ext);
}

// labels of i and j that some other item or the output still needs
std::vector<AxisLabel> kept_labels(const std::vector<PItem>& items, size_t i, size_t j,
                                   const std::set<AxisLabel>& outset) {
  std::set<AxisLabel> u = items[i].labels;
  u.insert(items[j].labels.begin(), items[j].labels.end());
  std::vector<AxisLabel> kept;
  for (AxisLabel l : u) {
    bool needed = outset.count(l) > 0;
    for (size_t k = 0; !needed && k < items.size(); ++k)
      if (k != i && k != j && items[k].labels.count(l)) needed = true;
    if (needed) kept.push_back(l);
  }
  return kept;
}

// contracts items i and j in place, appending the intermediate, and records
// the step (opt_einsum list convention)
void apply_step(std::vector<PItem>& items, size_t i, size_t j,
                const std::set<AxisLabel>& outset, const EinsumSpec& spec,
                ContractionPlan& plan) {
  PlanStep st;
  st.lhs = static_cast<int>(i);
  st.rhs = static_cast<int>(j);
  st.spec.operands = {items[i].axes, items[j].axes};
  st.spec.output = items.size() == 2 ? spec.output : kept_labels(items, i, j, outset);
  st.spec.extents = spec.extents;
  st.flops = step_cost(items[i], items[j], spec.extents);
  plan.total_flops += st.flops;

  PItem merged;
  merged.axes = st.spec.output;
  merged.labels.insert(merged.axes.begin(), merged.axes.end());
  merged.key = items[i].key;
  merged.key.insert(merged.key.end(), items[j].key.begin(), items[j].key.end());
  std::sort(merged.key.begin(), merged.key.end());

  plan.steps.push_back(std::move(st));
  items.erase(items.begin() + static_cast<long>(std::max(i, j)));
  items.erase(items.begin() + static_cast<long>(std::min(i, j)));
  items.push_back(std::move(merged));
}

}  // namespace

namespace {

// one greedy descent under a pluggable pair score; lower score wins, sharing
// pairs beat disjoint ones, operand keys break remaining ties
ContractionPlan greedy_once(const EinsumSpec& spec, const std::vector<bool>& is_delta,
                            int variant) {
  ContractionPlan plan;
  std::vector<PItem> items = make_items(spec, is_delta);
  std::set<AxisLabel> outset(spec.output.begin(), spec.output.end());
  while (items.size() > 1) {
    size_t bi = 0, bj = 1;
    bool have = false, best_shares = false;
    int64_t best_score = 0;
    for (size_t i = 0; i < items.size(); ++i) {
      for (size_t j = i + 1; j < items.size(); ++j) {
        bool shares = std::any_of(items[i].labels.begin(), items[i].labels.end(),
                                  [&](AxisLabel l) { return items[j].labels.count(l) > 0; });
        int64_t cost = step_cost(items[i], items[j], spec.extents);
        int64_t sizes = label_prod(items[i].labels, spec.extents) +
                        label_prod(items[j].labels, spec.extents);
        std::set<AxisLabel> kept;
        auto kv = kept_labels(items, i, j, outset);
        kept.insert(kv.begin(), kv.end());
        int64_t result = label_prod(kept, spec.extents);
        int64_t score = 0;
        switch (variant) {
          case 0: score = cost - sizes; break;       // flops net of freed inputs
          case 1: score = result - sizes; break;     // memory growth
          case 2: score = cost; break;               // raw flops
          default: score = result; break;            // smallest intermediate
        }
        bool better;
        if (!have) better = true;
        else if (shares != best_shares) better = shares;  // prefer sharing pairs
        else if (score != best_score) better = score < best_score;
        else better = std::make_pair(items[i].key, items[j].key) <
                      std::make_pair(items[bi].key, items[bj].key);
        if (better) {
          bi = i; bj = j;
          best_score = score;
          best_shares = shares;
          have = true;
        }
      }
    }
    apply_step(items, bi, bj, outset, spec, plan);
  }
  return plan;
}

}  // namespace

ContractionPlan greedy_path(const EinsumSpec& spec, const std::vector<bool>& is_delta) {
  // multi-start greedy: each scoring variant is a cheap local heuristic; the
  // cheapest resulting plan wins, with the first variant taking ties
  ContractionPlan best = greedy_once(spec, is_delta, 0);
  for (int v = 1; v < 4; ++v) {
    ContractionPlan p = greedy_once(spec, is_delta, v);
    if (p.total_flops < best.total_flops) best = std::move(p);
  }
  return best;
}

ContractionPlan left_fold_path(const EinsumSpec& spec, const std::vector<bool>& is_delta) {
  ContractionPlan plan;
  std::vector<PItem> items = make_items(spec, is_delta);
  std::set<AxisLabel> outset(spec.output.begin(), spec.output.end());
  while (items.size() > 1) {
    // accumulator sits at the end after the first step
    size_t acc = plan.steps.empty() ? 0 : items.size() - 1;
    size_t next = plan.steps.empty() ? 1 : 0;
    apply_step(items, acc, next, outset, spec, plan);
  }
  return plan;
}

ContractionPlan exhaustive_path(const EinsumSpec& spec, const std::vector<bool>& is_delta) {
  size_t n = spec.operands.size();
  if (n <= 2) return greedy_path(spec, is_delta);
  if (n > 16) return greedy_path(spec, is_delta);

  std::set<AxisLabel> outset(spec.output.begin(), spec.output.end());
  std::vector<std::set<AxisLabel>> leaf_labels(n);
  for (size_t i = 0; i < n; ++i)
    leaf_labels[i].insert(spec.operands[i].begin(), spec.operands[i].end());

  uint32_t full = (1u << n) - 1;
  auto mask_labels = [&](uint32_t m) {
    std::set<AxisLabel> s;
    for (size_t i = 0; i < n; ++i)
      if (m & (1u << i)) s.insert(leaf_labels[i].begin(), leaf_labels[i].end());
    return s;
  };
  // what the subtree must still expose: labels used outside it or in the output
  auto kept_of = [&](uint32_t m) {
    std::set<AxisLabel> inside = mask_labels(m);
    std::set<AxisLabel> outside = mask_labels(full & ~m);
    std::set<AxisLabel> kept;
    for (AxisLabel l : inside)
      if (outset.count(l) || outside.count(l)) kept.insert(l);
    return kept;
  };
  auto is_free = [&](uint32_t m) {
    if (__builtin_popcount(m) != 1) return false;
    size_t i = static_cast<size_t>(__builtin_ctz(m));
    return i < is_delta.size() && is_delta[i];
  };
  auto operand_labels = [&](uint32_t m) {
    if (__builtin_popcount(m) == 1)
      return leaf_labels[static_cast<size_t>(__builtin_ctz(m))];
    return kept_of(m);
  };
  auto merge_cost = [&](uint32_t a, uint32_t b) -> int64_t {
    if (is_free(a) || is_free(b)) return 0;
    std::set<AxisLabel> u = operand_labels(a);
    auto lb = operand_labels(b);
    u.insert(lb.begin(), lb.end());
    return 2 * label_prod(u, spec.extents);
  };

  std::vector<int64_t> best(full + 1, -1);
  std::vector<std::pair<uint32_t, uint32_t>> choice(full + 1, {0, 0});
  for (size_t i = 0; i < n; ++i) best[1u << i] = 0;
  for (uint32_t m = 1; m <= full; ++m) {
    if (__builtin_popcount(m) < 2) continue;
    uint32_t low = m & (~m + 1);
    for (uint32_t a = (m - 1) & m; a; a = (a - 1) & m) {
      if (!(a & low)) continue;  // canonical split, each partition once
      uint32_t b = m ^ a;
      int64_t c = best[a] + best[b] + merge_cost(a, b);
      if (best[m] < 0 || c < best[m]) {
        best[m] = c;
        choice[m] = {a, b};
      }
    }
  }

  // linearize the tree into the working-list step convention
  ContractionPlan plan;
  std::vector<PItem> items = make_items(spec, is_delta);
  std::vector<uint32_t> slots;
  for (size_t i = 0; i < n; ++i) slots.push_back(1u << i);
  std::function<void(uint32_t)> lin = [&](uint32_t m) {
    if (__builtin_popcount(m) == 1) return;
    auto [a, b] = choice[m];
    lin(a);
    lin(b);
    size_t pa = static_cast<size_t>(std::find(slots.begin(), slots.end(), a) - slots.begin());
    size_t pb = static_cast<size_t>(std::find(slots.begin(), slots.end(), b) - slots.begin());
    std::set<AxisLabel> outs(spec.output.begin(), spec.output.end());
    apply_step(items, pa, pb, outs, spec, plan);
    slots.erase(slots.begin() + static_cast<long>(std::max(pa, pb)));
    slots.erase(slots.begin() + static_cast<long>(std::min(pa, pb)));
    slots.push_back(m);
  };
  lin(full);
  return plan;
}

ContractionPlan plan_for(const EinsumSpec& spec, const std::vector<bool>& is_delta) {
  if (spec.operands.size() <= 1) {
    ContractionPlan plan;
    if (spec.operands.size() == 1 && spec.operands[0] != spec.output) {
      std::set<AxisLabel> labels(spec.operands[0].begin(), spec.operands[0].end());
      plan.total_flops = 2 * label_prod(labels, spec.extents);
    }
    return plan;
  }
  if (spec.operands.size() <= 5) return exhaustive_path(spec, is_delta);
  return greedy_path(spec, is_delta);
}

ContractionPlan plan_for(const NodePtr& einsum_node) {
  if (einsum_node->kind != NodeKind::Einsum)
    throw GraphError("plan_for expects an einsum node");
  std::vector<bool> d;
  for (auto& in : einsum_node->inputs) d.push_back(in->kind == NodeKind::Identity);
  return plan_for(einsum_node->spec, d);
}

// ---- dimension union-find ----

int DimUnionFind::add_dim(int64_t extent) {
  parent_.push_back(static_cast<int>(parent_.size()));
  extents_.push_back(extent);
  return static_cast<int>(parent_.size()) - 1;
}

int DimUnionFind::find(int d) const {
  while (parent_[static_cast<size_t>(d)] != d) {
    parent_[static_cast<size_t>(d)] = parent_[static_cast<size_t>(parent_[static_cast<size_t>(d)])];
    d = parent_[static_cast<size_t>(d)];
  }
  return d;
}

void DimUnionFind::unite(int a, int b) {
  a = find(a);
  b = find(b);
  if (a == b) return;
  if (extents_[static_cast<size_t>(a)] != extents_[static_cast<size_t>(b)])
    throw GraphError("axis extent conflict while fusing einsums");
  // smaller id wins, keeps label assignment deterministic
  if (a < b) parent_[static_cast<size_t>(b)] = a;
  else parent_[static_cast<size_t>(a)] = b;
}

AxisLabel DimUnionFind::label_of(int d) {
  int r = find(d);
  auto it = labels_.find(r);
  if (it != labels_.end()) return it->second;
  AxisLabel l = static_cast<AxisLabel>(labels_.size());
  labels_[r] = l;
  return l;
}

namespace {

struct FuseCtx {
  DimUnionFind uf;
  std::vector<NodePtr> leaves;
  std::vector<std::vector<int>> leaf_dims;
  double coeff = 1.0;
};

// returns the dim ids of the node's output axes; each operand instance gets
// fresh dims, unified only through shared subscripts
std::vector<int> fuse_walk(const NodePtr& n, FuseCtx& ctx) {
  switch (n->kind) {
    case NodeKind::Einsum: {
      std::vector<std::vector<int>> in_dims;
      for (auto& in : n->inputs) in_dims.push_back(fuse_walk(in, ctx));
      std::map<AxisLabel, int> rep;
      for (size_t i = 0; i < n->spec.operands.size(); ++i) {
        for (size_t j = 0; j < n->spec.operands[i].size(); ++j) {
          AxisLabel l = n->spec.operands[i][j];
          int d = in_dims[i][j];
          auto [it, fresh] = rep.emplace(l, d);
          if (!fresh) ctx.uf.unite(it->second, d);
        }
      }
      std::vector<int> out;
      for (AxisLabel l : n->spec.output) out.push_back(rep.at(l));
      return out;
    }
    case NodeKind::Transpose: {
      auto d = fuse_walk(n->inputs[0], ctx);
      std::vector<int> out;
      for (int p : n->perm) out.push_back(d[static_cast<size_t>(p)]);
      return out;
    }
    case NodeKind::Clone: return fuse_walk(n->inputs[0], ctx);
    case NodeKind::ScalarMul:
      ctx.coeff *= n->scalar;
      return fuse_walk(n->inputs[0], ctx);
    case NodeKind::Negate:
      ctx.coeff = -ctx.coeff;
      return fuse_walk(n->inputs[0], ctx);
    default: {
      // order-0 constants fold into the coefficient instead of staying as
      // operands; this keeps contraction operands structural and shareable
      if (n->kind == NodeKind::Constant && n->shape.empty()) {
        ctx.coeff *= n->value.values()[0];
        return {};
      }
      std::vector<int> dims;
      for (int64_t e : n->shape) dims.push_back(ctx.uf.add_dim(e));
      ctx.leaves.push_back(n);
      ctx.leaf_dims.push_back(dims);
      return dims;
    }
  }
}

}  // namespace

FusedEinsum build_uf(const NodePtr& root) {
  FuseCtx ctx;
  std::vector<int> out_dims = fuse_walk(root, ctx);
  FusedEinsum f;
  f.leaves = ctx.leaves;
  f.coeff = ctx.coeff;
  for (size_t i = 0; i < ctx.leaf_dims.size(); ++i) {
    std::vector<AxisLabel> axes;
    for (size_t j = 0; j < ctx.leaf_dims[i].size(); ++j) {
      int d = ctx.leaf_dims[i][j];
      AxisLabel l = ctx.uf.label_of(d);
      axes.push_back(l);
      f.spec.extents[l] = ctx.uf.extent_of(d);
    }
    f.spec.operands.push_back(std::move(axes));
  }
  for (int d : out_dims) f.spec.output.push_back(ctx.uf.label_of(d));
  return f;
}

// ---- passes ----

namespace {

NodePtr fuse_fn(const NodePtr& n, std::vector<NodePtr> ins) {
  NodePtr m = rebuild(n, std::move(ins));
  bool root = m->kind == NodeKind::Einsum ||
              (m->kind == NodeKind::Transpose && m->inputs[0]->kind == NodeKind::Einsum);
  if (!root) return m;
  FusedEinsum f = build_uf(m);
  if (f.leaves.empty()) return constant(DenseTensor::scalar(f.coeff));
  return apply_coeff(f.coeff, make_einsum(f.spec, f.leaves));
}

using Terms = std::vector<std::pair<double, NodePtr>>;

Terms linear_terms(const NodePtr& n) {
  switch (n->kind) {
    case NodeKind::Add: {
      Terms t;
      for (auto& in : n->inputs) {
        Terms s = linear_terms(in);
        t.insert(t.end(), s.begin(), s.end());
      }
      return t;
    }
    case NodeKind::Sub: {
      Terms t = linear_terms(n->inputs[0]);
      for (auto& [c, x] : linear_terms(n->inputs[1])) t.emplace_back(-c, x);
      return t;
    }
    case NodeKind::Negate: {
      Terms t = linear_terms(n->inputs[0]);
      for (auto& [c, x] : t) c = -c;
      return t;
    }
    case NodeKind::ScalarMul: {
      Terms t = linear_terms(n->inputs[0]);
      for (auto& [c, x] : t) c *= n->scalar;
      return t;
    }
    case NodeKind::Transpose: {
      Terms t;
      for (auto& [c, x] : linear_terms(n->inputs[0]))
        t.emplace_back(c, transpose(x, n->perm));
      return t;
    }
    default: return {{1.0, n}};
  }
}

NodePtr combine_terms(const Terms& terms, const Shape& shape) {
  std::vector<NodePtr> parts;
  for (auto& [c, t] : terms) {
    if (c == 0.0) continue;
    parts.push_back(apply_coeff(c, t));
  }
  if (parts.empty()) return zeros(shape);
  return parts.size() == 1 ? parts[0] : add(std::move(parts));
}

NodePtr distribute_fn(const NodePtr& n, std::vector<NodePtr> ins) {
  NodePtr m = rebuild(n, std::move(ins));
  if (m->kind == NodeKind::Transpose) return combine_terms(linear_terms(m), m->shape);
  if (m->kind != NodeKind::Einsum) return m;

  std::vector<Terms> per_op;
  size_t combos = 1;
  for (auto& in : m->inputs) {
    per_op.push_back(linear_terms(in));
    combos *= per_op.back().size();
    if (combos > 256) return m;  // blowup guard, leave undistributed
  }
  bool all_plain = true;
  for (size_t i = 0; i < per_op.size(); ++i)
    all_plain = all_plain && per_op[i].size() == 1 && per_op[i][0].first == 1.0 &&
                per_op[i][0].second->uid == m->inputs[i]->uid;
  if (all_plain) return m;

  Terms out;
  std::vector<size_t> pick(per_op.size(), 0);
  while (true) {
    double c = 1.0;
    std::vector<NodePtr> sel;
    for (size_t i = 0; i < per_op.size(); ++i) {
      c *= per_op[i][pick[i]].first;
      sel.push_back(per_op[i][pick[i]].second);
    }
    out.emplace_back(c, make_einsum(m->spec, std::move(sel)));
    size_t i = per_op.size();
    for (; i-- > 0;) {
      if (++pick[i] < per_op[i].size()) break;
      pick[i] = 0;
    }
    if (i == static_cast<size_t>(-1)) break;
  }
  return combine_terms(out, m->shape);
}

NodePtr prune_identity_fn(const NodePtr& n, std::vector<NodePtr> ins) {
  NodePtr m = rebuild(n, std::move(ins));
  if (m->kind != NodeKind::Einsum) return m;

  std::vector<std::vector<AxisLabel>> ops = m->spec.operands;
  std::vector<NodePtr> inputs = m->inputs;
  std::vector<AxisLabel> out = m->spec.output;
  std::map<AxisLabel, int64_t> ext = m->spec.extents;
  double coeff = 1.0;

  auto count_elsewhere = [&](AxisLabel l, size_t skip) {
    int c = 0;
    for (size_t i = 0; i < ops.size(); ++i) {
      if (i == skip) continue;
      c += static_cast<int>(std::count(ops[i].begin(), ops[i].end(), l));
    }
    return c;
  };
  auto in_out = [&](AxisLabel l) {
    return std::find(out.begin(), out.end(), l) != out.end();
  };
  auto drop = [&](size_t i) {
    ops.erase(ops.begin() + static_cast<long>(i));
    inputs.erase(inputs.begin() + static_cast<long>(i));
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i]->kind != NodeKind::Identity) continue;
      AxisLabel p = ops[i][0], q = ops[i][1];
      if (p == q) {
        // diagonal of the identity, a ones vector over p
        if (count_elsewhere(p, i) > 0) {
          drop(i);
        } else if (!in_out(p)) {
          coeff *= static_cast<double>(ext.at(p));
          drop(i);
        } else {
          continue;  // sole coverage of an output axis, keep
        }
        changed = true;
        break;
      }
      bool op_out = in_out(p), oq_out = in_out(q);
      if (op_out && oq_out) continue;  // genuinely delta-structured output
      AxisLabel f = !oq_out ? q : p;   // contracted side
      AxisLabel o = (f == q) ? p : q;
      if (count_elsewhere(f, i) > 0) {
        for (size_t j = 0; j < ops.size(); ++j) {
          if (j == i) continue;
          for (auto& l : ops[j])
            if (l == f) l = o;
        }
        drop(i);
      } else if (count_elsewhere(o, i) > 0) {
        drop(i);  // sum over f of delta(o, f) is 1
      } else if (in_out(o)) {
        continue;  // sole coverage of an output axis, keep
      } else {
        coeff *= static_cast<double>(ext.at(p));
        drop(i);
      }
      changed = true;
      break;
    }
  }

  if (inputs.empty()) return constant(DenseTensor::scalar(coeff));
  if (inputs.size() == 1) {
    const auto& ax = ops[0];
    std::set<AxisLabel> distinct(ax.begin(), ax.end());
    if (distinct.size() == ax.size() && ax.size() == out.size() &&
        distinct == std::set<AxisLabel>(out.begin(), out.end())) {
      if (ax == out) return apply_coeff(coeff, inputs[0]);
      std::vector<int> perm;
      for (AxisLabel l : out)
        perm.push_back(static_cast<int>(std::find(ax.begin(), ax.end(), l) - ax.begin()));
      return apply_coeff(coeff, transpose(inputs[0], perm));
    }
  }
  EinsumSpec spec;
  spec.operands = std::move(ops);
  spec.output = std::move(out);
  spec.extents = std::move(ext);
  return apply_coeff(coeff, make_einsum(std::move(spec), std::move(inputs)));
}

NodePtr prune_inverse_fn(const NodePtr& n, std::vector<NodePtr> ins) {
  NodePtr m = rebuild(n, std::move(ins));
  if (m->kind == NodeKind::TensorInverse && m->inputs[0]->kind == NodeKind::Identity)
    return m->inputs[0];
  if (m->kind != NodeKind::Einsum) return m;

  std::vector<std::vector<AxisLabel>> ops = m->spec.operands;
  std::vector<NodePtr> inputs = m->inputs;
  const std::vector<AxisLabel>& out = m->spec.output;
  std::map<AxisLabel, int64_t> ext = m->spec.extents;
  std::set<AxisLabel> outset(out.begin(), out.end());

  auto total_count = [&](AxisLabel l) {
    int c = 0;
    for (auto& op : ops) c += static_cast<int>(std::count(op.begin(), op.end(), l));
    return c;
  };
  // the contracted half must be private to this inverse/operand pair
  auto contractible = [&](const std::vector<AxisLabel>& group) {
    std::set<AxisLabel> seen;
    for (AxisLabel l : group) {
      if (!seen.insert(l).second) return false;
      if (outset.count(l) || total_count(l) != 2) return false;
    }
    return true;
  };

  bool changed = true;
  bool any = false;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < inputs.size() && !changed; ++i) {
      if (inputs[i]->kind != NodeKind::TensorInverse) continue;
      NodePtr t = inputs[i]->inputs[0];
      size_t half = static_cast<size_t>(t->order()) / 2;
      std::vector<AxisLabel> inv_col(ops[i].begin(), ops[i].begin() + static_cast<long>(half));
      std::vector<AxisLabel> inv_row(ops[i].begin() + static_cast<long>(half), ops[i].end());
      for (size_t j = 0; j < inputs.size() && !changed; ++j) {
        if (j == i || inputs[j]->uid != t->uid) continue;
        std::vector<AxisLabel> t_row(ops[j].begin(), ops[j].begin() + static_cast<long>(half));
        std::vector<AxisLabel> t_col(ops[j].begin() + static_cast<long>(half), ops[j].end());
        std::vector<std::pair<AxisLabel, AxisLabel>> deltas;
        if (inv_row == t_row && contractible(inv_row)) {
          for (size_t k = 0; k < half; ++k) deltas.emplace_back(inv_col[k], t_col[k]);
        } else if (inv_col == t_col && contractible(inv_col)) {
          for (size_t k = 0; k < half; ++k) deltas.emplace_back(inv_row[k], t_row[k]);
        } else {
          continue;
        }
        size_t hi = std::max(i, j), lo = std::min(i, j);
        ops.erase(ops.begin() + static_cast<long>(hi));
        inputs.erase(inputs.begin() + static_cast<long>(hi));
        ops.erase(ops.begin() + static_cast<long>(lo));
        inputs.erase(inputs.begin() + static_cast<long>(lo));
        for (auto& [a, b] : deltas) {
          inputs.push_back(identity(ext.at(a)));
          ops.push_back({a, b});
        }
        changed = true;
        any = true;
      }
    }
  }
  if (!any) return m;
  EinsumSpec spec;
  spec.operands = std::move(ops);
  spec.output = out;
  spec.extents = std::move(ext);
  return make_einsum(std::move(spec), std::move(inputs));
}

NodePtr decompose_inverse_fn(const NodePtr& n, std::vector<NodePtr> ins) {
  NodePtr m = rebuild(n, std::move(ins));
  if (m->kind != NodeKind::TensorInverse) return m;
  NodePtr t = m->inputs[0];
  if (t->kind == NodeKind::Identity) return t;
  if (t->kind != NodeKind::Einsum) return m;

  const EinsumSpec& spec = t->spec;
  size_t k = spec.operands.size();
  if (k < 2 || spec.output.empty() || spec.output.size() % 2 != 0) return m;
  size_t half = spec.output.size() / 2;

  std::vector<int> parent(k);
  for (size_t i = 0; i < k; ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) x = parent[static_cast<size_t>(x)];
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  };
  std::map<AxisLabel, int> label_owner;
  for (size_t i = 0; i < k; ++i) {
    for (AxisLabel l : spec.operands[i]) {
      auto [it, fresh] = label_owner.emplace(l, static_cast<int>(i));
      if (!fresh) unite(it->second, static_cast<int>(i));
    }
  }
  // paired output positions must stay in one factor
  for (size_t p = 0; p < half; ++p) {
    auto a = label_owner.find(spec.output[p]);
    auto b = label_owner.find(spec.output[p + half]);
    if (a == label_owner.end() || b == label_owner.end()) return m;
    unite(a->second, b->second);
  }

  std::map<int, std::vector<size_t>> comp_ops;
  for (size_t i = 0; i < k; ++i) comp_ops[find(static_cast<int>(i))].push_back(i);
  if (comp_ops.size() < 2) return m;

  struct Comp {
    std::vector<size_t> ops;
    std::vector<size_t> row_pos, col_pos;
    int64_t row_size = 1, col_size = 1;
  };
  std::vector<Comp> comps;
  for (auto& [root, members] : comp_ops) {
    Comp c;
    c.ops = members;
    std::set<AxisLabel> labels;
    for (size_t i : members)
      labels.insert(spec.operands[i].begin(), spec.operands[i].end());
    for (size_t p = 0; p < spec.output.size(); ++p) {
      if (!labels.count(spec.output[p])) continue;
      if (p < half) {
        c.row_pos.push_back(p);
        c.row_size *= spec.extents.at(spec.output[p]);
      } else {
        c.col_pos.push_back(p);
        c.col_size *= spec.extents.at(spec.output[p]);
      }
    }
    comps.push_back(std::move(c));
  }
  // factors without output axes are scalar-like; merge them into the first
  // factor that has some, and merge all non-square factors together
  auto merge_into = [&](Comp& dst, Comp& src) {
    dst.ops.insert(dst.ops.end(), src.ops.begin(), src.ops.end());
    std::sort(dst.ops.begin(), dst.ops.end());
    dst.row_pos.insert(dst.row_pos.end(), src.row_pos.begin(), src.row_pos.end());
    dst.col_pos.insert(dst.col_pos.end(), src.col_pos.begin(), src.col_pos.end());
    std::sort(dst.row_pos.begin(), dst.row_pos.end());
    std::sort(dst.col_pos.begin(), dst.col_pos.end());
    dst.row_size *= src.row_size;
    dst.col_size *= src.col_size;
    src.ops.clear();
  };
  for (size_t pass = 0; pass < 2; ++pass) {
    int first_bad = -1;
    for (size_t i = 0; i < comps.size(); ++i) {
      if (comps[i].ops.empty()) continue;
      bool bad = pass == 0 ? comps[i].row_pos.empty() && comps[i].col_pos.empty()
                           : comps[i].row_size != comps[i].col_size;
      if (pass == 0 && bad) {
        for (auto& c : comps) {
          if (!c.ops.empty() && !(c.row_pos.empty() && c.col_pos.empty())) {
            merge_into(c, comps[i]);
            break;
          }
        }
      } else if (bad) {
        if (first_bad < 0) first_bad = static_cast<int>(i);
        else merge_into(comps[static_cast<size_t>(first_bad)], comps[i]);
      }
    }
    if (pass == 1 && first_bad >= 0 &&
        comps[static_cast<size_t>(first_bad)].row_size !=
            comps[static_cast<size_t>(first_bad)].col_size)
      return m;
  }
  comps.erase(std::remove_if(comps.begin(), comps.end(),
                             [](const Comp& c) { return c.ops.empty(); }),
              comps.end());
  if (comps.size() < 2) return m;

  EinsumSpec outer;
  outer.extents = spec.extents;
  std::vector<NodePtr> outer_inputs;
  for (auto& c : comps) {
    EinsumSpec sub;
    sub.extents = spec.extents;
    std::vector<NodePtr> sub_inputs;
    for (size_t i : c.ops) {
      sub.operands.push_back(spec.operands[i]);
      sub_inputs.push_back(t->inputs[i]);
    }
    for (size_t p : c.row_pos) sub.output.push_back(spec.output[p]);
    for (size_t p : c.col_pos) sub.output.push_back(spec.output[p]);
    NodePtr invc = tensor_inverse(make_einsum(std::move(sub), std::move(sub_inputs)));
    std::vector<AxisLabel> axes;
    for (size_t p : c.col_pos) axes.push_back(spec.output[p]);
    for (size_t p : c.row_pos) axes.push_back(spec.output[p]);
    outer.operands.push_back(std::move(axes));
    outer_inputs.push_back(invc);
  }
  for (size_t p = half; p < spec.output.size(); ++p) outer.output.push_back(spec.output[p]);
  for (size_t p = 0; p < half; ++p) outer.output.push_back(spec.output[p]);
  return make_einsum(std::move(outer), std::move(outer_inputs));
}

bool is_algebra(NodeKind k) {
  return k == NodeKind::Add || k == NodeKind::Sub || k == NodeKind::Negate ||
         k == NodeKind::ScalarMul;
}

bool is_zero_constant(const NodePtr& n) {
  if (n->kind != NodeKind::Constant) return false;
  for (int64_t i = 0; i < n->value.size(); ++i)
    if (n->value[i] != 0.0) return false;
  return true;
}

void flatten_algebra(const NodePtr& n, double c,
                     std::map<std::string, std::pair<double, NodePtr>>& acc) {
  switch (n->kind) {
    case NodeKind::Add:
      for (auto& in : n->inputs) flatten_algebra(in, c, acc);
      return;
    case NodeKind::Sub:
      flatten_algebra(n->inputs[0], c, acc);
      flatten_algebra(n->inputs[1], -c, acc);
      return;
    case NodeKind::Negate: flatten_algebra(n->inputs[0], -c, acc); return;
    case NodeKind::ScalarMul: flatten_algebra(n->inputs[0], c * n->scalar, acc); return;
    default:
      if (is_zero_constant(n)) return;
      auto [it, fresh] = acc.emplace(n->uid, std::make_pair(c, n));
      if (!fresh) it->second.first += c;
      return;
  }
}

NodePtr normalize_algebra_fn(const NodePtr& n, std::vector<NodePtr> ins) {
  NodePtr m = rebuild(n, std::move(ins));
  if (!is_algebra(m->kind)) return m;
  std::map<std::string, std::pair<double, NodePtr>> acc;
  flatten_algebra(m, 1.0, acc);
  std::vector<NodePtr> parts;
  for (auto& [uid, term] : acc) {
    if (term.first == 0.0) continue;
    parts.push_back(apply_coeff(term.first, term.second));
  }
  if (parts.empty()) return zeros(m->shape);
  return parts.size() == 1 ? parts[0] : add(std::move(parts));
}

}  // namespace

Graph distribute(const Graph& g) { return transform_graph(g, distribute_fn); }
Graph fuse_einsums(const Graph& g) { return transform_graph(g, fuse_fn); }
Graph decompose_inverse(const Graph& g) { return transform_graph(g, decompose_inverse_fn); }
Graph prune_identity(const Graph& g) { return transform_graph(g, prune_identity_fn); }
Graph prune_inverse(const Graph& g) { return transform_graph(g, prune_inverse_fn); }
Graph normalize_algebra(const Graph& g) { return transform_graph(g, normalize_algebra_fn); }

NodePtr distribute(const NodePtr& n) { return distribute(Graph({n})).sinks[0]; }
NodePtr fuse_einsums(const NodePtr& n) { return fuse_einsums(Graph({n})).sinks[0]; }
NodePtr decompose_inverse(const NodePtr& n) { return decompose_inverse(Graph({n})).sinks[0]; }
NodePtr prune_identity(const NodePtr& n) { return prune_identity(Graph({n})).sinks[0]; }
NodePtr prune_inverse(const NodePtr& n) { return prune_inverse(Graph({n})).sinks[0]; }
NodePtr normalize_algebra(const NodePtr& n) { return normalize_algebra(Graph({n})).sinks[0]; }

Graph cse(const Graph& g) {
  std::vector<NodePtr> sinks = g.sinks;
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    std::map<std::string, NodePtr> reps;  // operand signature -> representative
    std::map<std::string, NodePtr> memo;
    auto f = [&](const NodePtr& n, std::vector<NodePtr> ins) -> NodePtr {
      NodePtr m = rebuild(n, std::move(ins));
      if (m->kind != NodeKind::Einsum) return m;
      std::string key;
      for (size_t i = 0; i < m->inputs.size(); ++i) {
        key += m->inputs[i]->uid + "[";
        for (AxisLabel l : m->spec.operands[i]) key += std::to_string(l) + ",";
        key += "]";
      }
      std::vector<AxisLabel> sorted_out = m->spec.output;
      std::sort(sorted_out.begin(), sorted_out.end());
      key += "->";
      for (AxisLabel l : sorted_out) key += std::to_string(l) + ",";
      auto [it, fresh] = reps.emplace(key, m);
      if (fresh || it->second->uid == m->uid) return m;
      const NodePtr& r = it->second;
      std::vector<int> perm;
      for (AxisLabel l : m->spec.output)
        perm.push_back(static_cast<int>(
            std::find(r->spec.output.begin(), r->spec.output.end(), l) -
            r->spec.output.begin()));
      changed = true;
      return transpose(r, perm);
    };
    std::vector<NodePtr> next;
    for (auto& s : sinks) next.push_back(transform_node(s, memo, f));
    sinks = std::move(next);
    if (!changed) break;
  }
  return Graph(std::move(sinks));
}

// ---- contraction path materialization ----

std::pair<NodePtr, ContractionPlan> opt_contract_path(const NodePtr& n) {
  if (n->kind != NodeKind::Einsum)
    throw GraphError("opt_contract_path expects an einsum node");
  ContractionPlan plan = plan_for(n);
  if (n->spec.arity() <= 2) return {n, plan};
  std::vector<NodePtr> work = n->inputs;
  for (auto& st : plan.steps) {
    NodePtr nn = make_einsum(st.spec, {work[static_cast<size_t>(st.lhs)],
                                       work[static_cast<size_t>(st.rhs)]});
    work.erase(work.begin() + std::max(st.lhs, st.rhs));
    work.erase(work.begin() + std::min(st.lhs, st.rhs));
    work.push_back(nn);
  }
  return {work[0], plan};
}

namespace {

struct CItem {
  NodePtr node;
  std::vector<AxisLabel> axes;
  bool is_delta = false;
};

// materializes the steps of `plan` whose indices are in `take` (all if empty),
// consuming from `items`; returns the index of the last-built intermediate
int materialize_steps(std::vector<CItem>& items, const std::vector<int>& which,
                      const ContractionPlan& plan, const std::vector<int>& item_of_slot_init) {
  // Replay symbolically to bind each step to item identities, then build only
  // the selected steps. Identities: >=0 item index, <0 encodes -(step+1).
  std::vector<int> slot = item_of_slot_init;
  std::vector<std::pair<int, int>> step_args(plan.steps.size());
  for (size_t t = 0; t < plan.steps.size(); ++t) {
    const PlanStep& st = plan.steps[t];
    step_args[t] = {slot[static_cast<size_t>(st.lhs)], slot[static_cast<size_t>(st.rhs)]};
    slot.erase(slot.begin() + std::max(st.lhs, st.rhs));
    slot.erase(slot.begin() + std::min(st.lhs, st.rhs));
    slot.push_back(-(static_cast<int>(t) + 1));
  }
  std::set<int> take(which.begin(), which.end());
  bool all = which.empty();
  std::map<int, CItem> built;  // step id -> intermediate
  std::set<int> consumed_items;
  int last = 0;  // valid intermediate ids are negative
  for (size_t t = 0; t < plan.steps.size(); ++t) {
    if (!all && !take.count(static_cast<int>(t))) continue;
    auto get = [&](int id) -> CItem {
      if (id >= 0) {
        consumed_items.insert(id);
        return items[static_cast<size_t>(id)];
      }
      return built.at(id);
    };
    CItem a = get(step_args[t].first);
    CItem b = get(step_args[t].second);
    CItem r;
    r.node = make_einsum(plan.steps[t].spec, {a.node, b.node});
    r.axes = plan.steps[t].spec.output;
    built[-(static_cast<int>(t) + 1)] = r;
    last = -(static_cast<int>(t) + 1);
  }
  if (last == 0) return -1;
  // rebuild the item list: unconsumed items plus the final intermediate
  std::vector<CItem> next;
  int result_idx = -1;
  for (size_t i = 0; i < items.size(); ++i)
    if (!consumed_items.count(static_cast<int>(i))) next.push_back(items[i]);
  next.push_back(built.at(last));
  result_idx = static_cast<int>(next.size()) - 1;
  items = std::move(next);
  return result_idx;
}

}  // namespace

NodePtr opt_contract_path_w_constraint(const NodePtr& n,
                                       const std::vector<NodePtr>& order) {
  if (n->kind != NodeKind::Einsum)
    throw GraphError("opt_contract_path_w_constraint expects an einsum node");
  for (auto& c : order) {
    bool found = false;
    for (auto& in : n->inputs) found = found || in->uid == c->uid;
    if (!found)
      throw GraphError("constraint entry is not an input of the einsum");
  }
  if (n->spec.arity() <= 2 || order.empty()) return opt_contract_path(n).first;

  const EinsumSpec& spec = n->spec;
  std::set<AxisLabel> outset(spec.output.begin(), spec.output.end());
  std::vector<CItem> items;
  for (size_t i = 0; i < n->inputs.size(); ++i)
    items.push_back({n->inputs[i], spec.operands[i],
                     n->inputs[i]->kind == NodeKind::Identity});

  int frozen = -1;
  for (size_t ci = 0; ci < order.size(); ++ci) {
    std::set<std::string> later;
    for (size_t j = ci + 1; j < order.size(); ++j) later.insert(order[j]->uid);
    std::vector<int> allowed;
    std::vector<bool> marked_flag;
    for (size_t i = 0; i < items.size(); ++i) {
      bool is_marked = static_cast<int>(i) == frozen ||
                       items[i].node->uid == order[ci]->uid;
      if (!is_marked && later.count(items[i].node->uid)) continue;
      allowed.push_back(static_cast<int>(i));
      marked_flag.push_back(is_marked);
    }
    if (allowed.size() < 2) {
      for (size_t a = 0; a < allowed.size(); ++a)
        if (marked_flag[a]) frozen = allowed[a];
      continue;
    }

    // sub problem over the allowed items; its output is whatever the rest of
    // the expression still needs
    EinsumSpec ss;
    ss.extents = spec.extents;
    std::vector<bool> deltas;
    std::set<AxisLabel> inside, external = outset;
    std::set<int> allowed_set(allowed.begin(), allowed.end());
    for (size_t i = 0; i < items.size(); ++i)
      if (!allowed_set.count(static_cast<int>(i)))
        external.insert(items[i].axes.begin(), items[i].axes.end());
    for (int idx : allowed) {
      ss.operands.push_back(items[static_cast<size_t>(idx)].axes);
      deltas.push_back(items[static_cast<size_t>(idx)].is_delta);
      inside.insert(items[static_cast<size_t>(idx)].axes.begin(),
                    items[static_cast<size_t>(idx)].axes.end());
    }
    for (AxisLabel l : inside)
      if (external.count(l)) ss.output.push_back(l);

    ContractionPlan plan = plan_for(ss, deltas);
    if (plan.steps.empty()) continue;

    // locate the earliest step covering all marked leaves plus its subtree
    uint64_t marked_mask = 0;
    for (size_t a = 0; a < allowed.size(); ++a)
      if (marked_flag[a]) marked_mask |= 1ull << a;
    std::vector<uint64_t> slot_mask;
    std::vector<std::set<int>> slot_steps;
    for (size_t a = 0; a < allowed.size(); ++a) {
      slot_mask.push_back(1ull << a);
      slot_steps.push_back({});
    }
    int cover = -1;
    std::set<int> subtree;
    for (size_t t = 0; t < plan.steps.size(); ++t) {
      const PlanStep& st = plan.steps[t];
      uint64_t mm = slot_mask[static_cast<size_t>(st.lhs)] |
                    slot_mask[static_cast<size_t>(st.rhs)];
      std::set<int> ss2 = slot_steps[static_cast<size_t>(st.lhs)];
      ss2.insert(slot_steps[static_cast<size_t>(st.rhs)].begin(),
                 slot_steps[static_cast<size_t>(st.rhs)].end());
      ss2.insert(static_cast<int>(t));
      size_t hi = static_cast<size_t>(std::max(st.lhs, st.rhs));
      size_t lo = static_cast<size_t>(std::min(st.lhs, st.rhs));
      slot_mask.erase(slot_mask.begin() + static_cast<long>(hi));
      slot_mask.erase(slot_mask.begin() + static_cast<long>(lo));
      slot_steps.erase(slot_steps.begin() + static_cast<long>(hi));
      slot_steps.erase(slot_steps.begin() + static_cast<long>(lo));
      slot_mask.push_back(mm);
      slot_steps.push_back(ss2);
      if ((mm & marked_mask) == marked_mask) {
        cover = static_cast<int>(t);
        subtree = ss2;
        break;
      }
    }
    if (cover < 0) continue;  // cannot happen, the last step covers everything

    std::vector<int> take(subtree.begin(), subtree.end());
    frozen = materialize_steps(items, take, plan, allowed);
  }

  // final unconstrained contraction of what is left, honoring the true output
  while (items.size() > 1) {
    EinsumSpec fs;
    fs.extents = spec.extents;
    std::vector<bool> deltas;
    for (auto& it : items) {
      fs.operands.push_back(it.axes);
      deltas.push_back(it.is_delta);
    }
    fs.output = spec.output;
    ContractionPlan plan = plan_for(fs, deltas);
    std::vector<int> item_ids;
    for (size_t i = 0; i < items.size(); ++i) item_ids.push_back(static_cast<int>(i));
    materialize_steps(items, {}, plan, item_ids);
  }
  NodePtr result = items[0].node;
  if (items[0].axes != spec.output) {
    EinsumSpec reorder;
    reorder.operands = {items[0].axes};
    reorder.output = spec.output;
    reorder.extents = spec.extents;
    result = make_einsum(std::move(reorder), {result});
  }
  return result;
}

std::vector<NodePtr> generate_dimension_tree(const std::vector<NodePtr>& update_nodes,
                                             const std::vector<NodePtr>& sites) {
  size_t N = sites.size();
  std::vector<NodePtr> out;
  for (size_t i = 0; i < update_nodes.size(); ++i) {
    const NodePtr& u = update_nodes[i];
    if (u->kind != NodeKind::Einsum || u->spec.arity() <= 2) {
      out.push_back(u);
      continue;
    }
    std::set<std::string> input_uids;
    for (auto& in : u->inputs) input_uids.insert(in->uid);
    std::vector<NodePtr> L;
    for (size_t j = N; j-- > i + 1;)
      if (input_uids.count(sites[j]->uid)) L.push_back(sites[j]);
    for (size_t j = 0; j < i; ++j)
      if (input_uids.count(sites[j]->uid)) L.push_back(sites[j]);
    out.push_back(L.empty() ? opt_contract_path(u).first
                            : opt_contract_path_w_constraint(u, L));
  }
  return out;
}

// ---- cost model & pipeline ----

namespace {

int64_t node_flops(const NodePtr& n) {
  switch (n->kind) {
    case NodeKind::Einsum: {
      std::vector<bool> d;
      for (auto& in : n->inputs) d.push_back(in->kind == NodeKind::Identity);
      if (n->spec.arity() <= 2) return plan_for(n->spec, d).total_flops;
      // unsplit flat einsums are priced as one nested loop over every label
      int64_t cost = 2;
      for (auto& [label, extent] : n->spec.extents) {
        (void)label;
        cost *= extent;
      }
      return cost;
    }
    case NodeKind::TensorInverse: {
      int64_t r = 1;
      const NodePtr& t = n->inputs[0];
      for (int64_t i = 0; i < t->order() / 2; ++i) r *= t->shape[static_cast<size_t>(i)];
      return 2 * r * r * r;
    }
    case NodeKind::Add:
      return static_cast<int64_t>(n->inputs.size() - 1) * shape_size(n->shape);
    case NodeKind::Sub:
    case NodeKind::Negate:
    case NodeKind::ScalarMul:
    case NodeKind::Transpose: return shape_size(n->shape);
    case NodeKind::ScalarInverse: return 1;
    default: return 0;
  }
}

}  // namespace

int64_t flop_estimate(const Graph& g) {
  int64_t total = 0;
  for (auto& n : topo_order(g.sinks)) total += node_flops(n);
  return total;
}

int64_t flop_estimate(const NodePtr& n) { return flop_estimate(Graph({n})); }

std::string PassReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (auto& e : entries) {
    nlohmann::json j;
    j["pass"] = e.pass;
    j["nodes_before"] = e.nodes_before;
    j["nodes_after"] = e.nodes_after;
    j["flops_before"] = e.flops_before;
    j["flops_after"] = e.flops_after;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

Graph optimize(const Graph& g, PassReport* report, const OptimizeOptions& options) {
  Graph cur = g;
  int dump_idx = 0;
  auto apply = [&](const std::string& name, auto&& fn) {
    PassEntry e;
    e.pass = name;
    e.nodes_before = static_cast<int64_t>(cur.node_count());
    e.flops_before = flop_estimate(cur);
    Graph next = fn(cur);
    e.nodes_after = static_cast<int64_t>(next.node_count());
    e.flops_after = flop_estimate(next);
    if (report) report->entries.push_back(std::move(e));
    bool want_dump = !options.dump_dir.empty() &&
                     (options.dump_passes.empty() ||
                      std::find(options.dump_passes.begin(), options.dump_passes.end(),
                                name) != options.dump_passes.end());
    if (want_dump) {
      std::filesystem::create_directories(options.dump_dir);
      char buf[16];
      snprintf(buf, sizeof(buf), "%02d", dump_idx++);
      std::ofstream out(options.dump_dir + "/" + buf + "_" + name + ".dot");
      out << to_dot(next);
    }
    cur = std::move(next);
  };

  apply("distribute", [](const Graph& x) { return distribute(x); });
  for (int iter = 0; iter < options.max_symbolic_iters; ++iter) {
    Graph before = cur;
    apply("fuse_einsums", [](const Graph& x) { return fuse_einsums(x); });
    apply("decompose_inverse", [](const Graph& x) { return decompose_inverse(x); });
    apply("prune_identity", [](const Graph& x) { return prune_identity(x); });
    apply("prune_inverse", [](const Graph& x) { return prune_inverse(x); });
    apply("normalize_algebra", [](const Graph& x) { return normalize_algebra(x); });
    if (structurally_equal(cur, before)) break;
  }
  apply("contraction_path", [&](const Graph& x) {
    return transform_graph(x, [&](const NodePtr& n, std::vector<NodePtr> ins) {
      NodePtr m = rebuild(n, std::move(ins));
      if (m->kind != NodeKind::Einsum || m->spec.arity() <= 2) return m;
      if (options.constrained_pivot && !options.constraint_order.empty()) {
        bool has_pivot = false;
        std::set<std::string> input_uids;
        for (auto& in : m->inputs) {
          input_uids.insert(in->uid);
          has_pivot = has_pivot || in->uid == options.constrained_pivot->uid;
        }
        if (has_pivot) {
          std::vector<NodePtr> L;
          for (auto& c : options.constraint_order)
            if (input_uids.count(c->uid)) L.push_back(c);
          if (!L.empty()) return opt_contract_path_w_constraint(m, L);
        }
      }
      return opt_contract_path(m).first;
    });
  });
  apply("cse", [](const Graph& x) { return cse(x); });
  return cur;
}

NodePtr optimize(const NodePtr& n, PassReport* report, const OptimizeOptions& options) {
  return optimize(Graph({n}), report, options).sinks[0];
}

Graph regularize_inverse_operands(const Graph& g, double eps) {
  return transform_graph(g, [&](const NodePtr& n, std::vector<NodePtr> ins) {
    NodePtr m = rebuild(n, std::move(ins));
    if (m->kind != NodeKind::TensorInverse) return m;
    NodePtr u = m->inputs[0];
    size_t half = static_cast<size_t>(u->order()) / 2;
    bool elementwise = true;
    for (size_t i = 0; i < half; ++i)
      elementwise = elementwise && u->shape[i] == u->shape[half + i];
    NodePtr eye;
    if (u->order() == 2) {
      eye = identity(u->shape[0]);
    } else if (elementwise) {
      EinsumSpec spec;
      std::vector<NodePtr> deltas;
      for (size_t i = 0; i < half; ++i) {
        deltas.push_back(identity(u->shape[i]));
        spec.operands.push_back({static_cast<AxisLabel>(i),
                                 static_cast<AxisLabel>(half + i)});
      }
      for (size_t i = 0; i < 2 * half; ++i)
        spec.output.push_back(static_cast<AxisLabel>(i));
      eye = make_einsum(std::move(spec), std::move(deltas));
    } else {
      int64_t r = 1;
      for (size_t i = 0; i < half; ++i) r *= u->shape[i];
      DenseTensor t(u->shape);
      for (int64_t i = 0; i < r; ++i) t[i * r + i] = 1.0;
      eye = constant(std::move(t));
    }
    return tensor_inverse(add(u, scalar_mul(eps, eye)));
  });
}

NodePtr regularize_inverse_operands(const NodePtr& n, double eps) {
  return regularize_inverse_operands(Graph({n}), eps).sinks[0];
}

int64_t count_einsums_touching(const Graph& g, const NodePtr& input) {
  int64_t count = 0;
  for (auto& n : topo_order(g.sinks)) {
    if (n->kind != NodeKind::Einsum) continue;
    for (auto& in : n->inputs) {
      if (in->uid == input->uid) {
        ++count;
        break;
      }
    }
  }
  return count;
}

}  // namespace einopt
