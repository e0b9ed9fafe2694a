#include "einopt/graph.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace einopt {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(const std::string& key) {
  static const char* digits = "0123456789abcdef";
  uint64_t h = fnv1a(key);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Process-wide intern table. Keys are full canonical strings, so uid hash
// collisions cannot merge distinct nodes.
class NodeStore {
 public:
  static NodeStore& instance() {
    static NodeStore store;
    return store;
  }

  NodePtr intern(const std::string& key, Node node) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = nodes_.find(key);
    if (it != nodes_.end()) return it->second;
    node.uid = hash_hex(key);
    node.seq = next_seq_++;
    auto ptr = std::make_shared<const Node>(std::move(node));
    nodes_.emplace(key, ptr);
    return ptr;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, NodePtr> nodes_;
  uint64_t next_seq_ = 0;
};

std::string shape_key(const Shape& s) {
  std::string k;
  for (int64_t e : s) k += std::to_string(e) + ",";
  return k;
}

std::string scalar_key(double v) {
  char buf[40];
  snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Variable: return "variable";
    case NodeKind::Constant: return "constant";
    case NodeKind::Identity: return "identity";
    case NodeKind::Einsum: return "einsum";
    case NodeKind::Add: return "add";
    case NodeKind::Sub: return "sub";
    case NodeKind::Negate: return "negate";
    case NodeKind::ScalarMul: return "scalar_mul";
    case NodeKind::ScalarInverse: return "scalar_inverse";
    case NodeKind::TensorInverse: return "tensor_inverse";
    case NodeKind::Transpose: return "transpose";
    case NodeKind::Clone: return "clone";
  }
  return "?";
}

std::string EinsumSpec::to_string() const {
  std::map<AxisLabel, std::string> names;
  auto name_of = [&](AxisLabel id) -> std::string {
    auto it = names.find(id);
    if (it != names.end()) return it->second;
    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    std::string n = names.size() < alphabet.size()
                        ? std::string(1, alphabet[names.size()])
                        : "{" + std::to_string(id) + "}";
    names[id] = n;
    return n;
  };
  std::string s;
  for (size_t i = 0; i < operands.size(); ++i) {
    if (i) s += ",";
    for (AxisLabel a : operands[i]) s += name_of(a);
  }
  s += "->";
  for (AxisLabel a : output) s += name_of(a);
  return s;
}

EinsumSpec parse_subscripts(const std::string& subscripts,
                            const std::vector<Shape>& operand_shapes) {
  auto arrow = subscripts.find("->");
  if (arrow == std::string::npos)
    throw GraphError("einsum subscripts must contain '->': " + subscripts);
  std::string lhs = subscripts.substr(0, arrow);
  std::string rhs = subscripts.substr(arrow + 2);

  EinsumSpec spec;
  std::vector<AxisLabel> current;
  std::map<char, AxisLabel> ids;
  auto id_of = [&](char c) {
    auto it = ids.find(c);
    if (it != ids.end()) return it->second;
    AxisLabel id = static_cast<AxisLabel>(ids.size());
    ids[c] = id;
    return id;
  };
  for (char c : lhs) {
    if (c == ',') {
      spec.operands.push_back(current);
      current.clear();
    } else if (!isspace(static_cast<unsigned char>(c))) {
      current.push_back(id_of(c));
    }
  }
  spec.operands.push_back(current);
  for (char c : rhs) {
    if (!isspace(static_cast<unsigned char>(c))) {
      auto it = ids.find(c);
      if (it == ids.end())
        throw GraphError(std::string("output subscript '") + c +
                         "' does not appear in any operand");
      spec.output.push_back(it->second);
    }
  }

  if (spec.operands.size() != operand_shapes.size())
    throw GraphError("subscript arity does not match operand count");
  for (size_t i = 0; i < operand_shapes.size(); ++i) {
    if (spec.operands[i].size() != operand_shapes[i].size())
      throw GraphError("operand " + std::to_string(i) + " order mismatch in '" +
                       subscripts + "'");
    for (size_t j = 0; j < spec.operands[i].size(); ++j) {
      AxisLabel id = spec.operands[i][j];
      int64_t e = operand_shapes[i][j];
      auto it = spec.extents.find(id);
      if (it == spec.extents.end()) {
        spec.extents[id] = e;
      } else if (it->second != e) {
        throw GraphError("extent conflict for subscript in '" + subscripts + "'");
      }
    }
  }
  return spec;
}

// ---- constructors ----

NodePtr variable(const std::string& name, Shape shape) {
  for (int64_t e : shape)
    if (e < 1) throw GraphError("variable extent must be >= 1");
  Node n;
  n.kind = NodeKind::Variable;
  n.name = name;
  n.shape = shape;
  return NodeStore::instance().intern("var:" + name + ":" + shape_key(shape), std::move(n));
}

NodePtr constant(DenseTensor value) {
  std::string payload;
  payload.reserve(static_cast<size_t>(value.size()) * 8);
  for (int64_t i = 0; i < value.size(); ++i) {
    double d = value[i];
    payload.append(reinterpret_cast<const char*>(&d), 8);
  }
  std::string key = "const:" + shape_key(value.shape()) + ":" + hash_hex(payload);
  Node n;
  n.kind = NodeKind::Constant;
  n.shape = value.shape();
  n.value = std::move(value);
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr zeros(const Shape& shape) { return constant(DenseTensor(shape)); }

NodePtr identity(int64_t extent) {
  if (extent < 1) throw GraphError("identity extent must be >= 1");
  Node n;
  n.kind = NodeKind::Identity;
  n.extent = extent;
  n.shape = {extent, extent};
  return NodeStore::instance().intern("id:" + std::to_string(extent), std::move(n));
}

NodePtr make_einsum(EinsumSpec spec, std::vector<NodePtr> inputs) {
  if (spec.operands.size() != inputs.size())
    throw GraphError("einsum arity mismatch: spec has " +
                     std::to_string(spec.operands.size()) + " operands, got " +
                     std::to_string(inputs.size()) + " inputs");
  // Fill/validate extents against input shapes.
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (spec.operands[i].size() != inputs[i]->shape.size())
      throw GraphError("einsum operand " + std::to_string(i) +
                       " order mismatch: spec expects " +
                       std::to_string(spec.operands[i].size()) + " axes, input has " +
                       std::to_string(inputs[i]->shape.size()));
    for (size_t j = 0; j < spec.operands[i].size(); ++j) {
      AxisLabel id = spec.operands[i][j];
      int64_t e = inputs[i]->shape[j];
      auto it = spec.extents.find(id);
      if (it == spec.extents.end()) {
        spec.extents[id] = e;
      } else if (it->second != e) {
        throw GraphError("einsum extent mismatch on operand " + std::to_string(i) +
                         " axis " + std::to_string(j) + ": " + std::to_string(e) +
                         " vs " + std::to_string(it->second));
      }
    }
  }
  std::set<AxisLabel> in_operands;
  for (auto& op : spec.operands) in_operands.insert(op.begin(), op.end());
  std::set<AxisLabel> out_seen;
  for (AxisLabel a : spec.output) {
    if (!in_operands.count(a))
      throw GraphError("einsum output axis does not appear in any operand");
    if (!out_seen.insert(a).second)
      throw GraphError("einsum output axes must be distinct");
  }

  // Canonicalization: sort operands by (input uid, original position), then
  // renumber labels by first appearance. Structurally identical einsums get
  // identical nodes regardless of operand order or label naming.
  std::vector<int> order(inputs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return inputs[a]->uid < inputs[b]->uid;
  });

  EinsumSpec canon;
  std::map<AxisLabel, AxisLabel> relabel;
  auto renum = [&](AxisLabel id) {
    auto it = relabel.find(id);
    if (it != relabel.end()) return it->second;
    AxisLabel fresh = static_cast<AxisLabel>(relabel.size());
    relabel[id] = fresh;
    return fresh;
  };
  std::vector<NodePtr> sorted_inputs;
  for (int idx : order) {
    std::vector<AxisLabel> axes;
    for (AxisLabel a : spec.operands[idx]) axes.push_back(renum(a));
    canon.operands.push_back(std::move(axes));
    sorted_inputs.push_back(inputs[idx]);
  }
  for (AxisLabel a : spec.output) canon.output.push_back(renum(a));
  for (auto& [old_id, fresh] : relabel) canon.extents[fresh] = spec.extents.at(old_id);

  Shape shape;
  for (AxisLabel a : canon.output) shape.push_back(canon.extents.at(a));

  std::string key = "einsum:";
  for (size_t i = 0; i < sorted_inputs.size(); ++i) {
    key += sorted_inputs[i]->uid + "[";
    for (AxisLabel a : canon.operands[i]) key += std::to_string(a) + ",";
    key += "]";
  }
  key += "->[";
  for (AxisLabel a : canon.output) key += std::to_string(a) + ",";
  key += "]";

  Node n;
  n.kind = NodeKind::Einsum;
  n.shape = std::move(shape);
  n.inputs = std::move(sorted_inputs);
  n.spec = std::move(canon);
  n.operand_perm = std::move(order);
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr make_einsum(const std::string& subscripts, std::vector<NodePtr> inputs) {
  std::vector<Shape> shapes;
  for (auto& i : inputs) shapes.push_back(i->shape);
  return make_einsum(parse_subscripts(subscripts, shapes), std::move(inputs));
}

NodePtr add(std::vector<NodePtr> inputs) {
  if (inputs.empty()) throw GraphError("add requires at least one input");
  for (auto& i : inputs) {
    if (i->shape != inputs[0]->shape)
      throw GraphError("add input shapes differ: " + shape_to_string(i->shape) +
                       " vs " + shape_to_string(inputs[0]->shape));
  }
  if (inputs.size() == 1) return inputs[0];
  std::sort(inputs.begin(), inputs.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->uid < b->uid; });
  std::string key = "add:";
  for (auto& i : inputs) key += i->uid + ",";
  Node n;
  n.kind = NodeKind::Add;
  n.shape = inputs[0]->shape;
  n.inputs = std::move(inputs);
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr add(NodePtr a, NodePtr b) { return add(std::vector<NodePtr>{a, b}); }

NodePtr sub(NodePtr a, NodePtr b) {
  if (a->shape != b->shape)
    throw GraphError("sub input shapes differ: " + shape_to_string(a->shape) +
                     " vs " + shape_to_string(b->shape));
  std::string key = "sub:" + a->uid + "," + b->uid;
  Node n;
  n.kind = NodeKind::Sub;
  n.shape = a->shape;
  n.inputs = {a, b};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr negate(NodePtr a) {
  std::string key = "neg:" + a->uid;
  Node n;
  n.kind = NodeKind::Negate;
  n.shape = a->shape;
  n.inputs = {a};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr scalar_mul(double c, NodePtr a) {
  std::string key = "smul:" + scalar_key(c) + ":" + a->uid;
  Node n;
  n.kind = NodeKind::ScalarMul;
  n.shape = a->shape;
  n.scalar = c;
  n.inputs = {a};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr scalar_mul(NodePtr s, NodePtr a) {
  if (s->order() != 0) throw GraphError("scalar_mul scalar operand must have order 0");
  // Lowered to an einsum so it stays visible to contraction-path selection.
  EinsumSpec spec;
  spec.operands.push_back({});
  std::vector<AxisLabel> axes;
  for (size_t i = 0; i < a->shape.size(); ++i) axes.push_back(static_cast<AxisLabel>(i));
  spec.operands.push_back(axes);
  spec.output = axes;
  return make_einsum(std::move(spec), {s, a});
}

NodePtr scalar_inverse(NodePtr a) {
  if (a->order() != 0) throw GraphError("scalar_inverse input must have order 0");
  std::string key = "sinv:" + a->uid;
  Node n;
  n.kind = NodeKind::ScalarInverse;
  n.shape = {};
  n.inputs = {a};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr tensor_inverse(NodePtr a) {
  int64_t ord = a->order();
  if (ord == 0 || ord % 2 != 0)
    throw GraphError("tensor_inverse input must have positive even order");
  int64_t half = ord / 2;
  int64_t r1 = 1, r2 = 1;
  for (int64_t i = 0; i < half; ++i) r1 *= a->shape[i];
  for (int64_t i = half; i < ord; ++i) r2 *= a->shape[i];
  if (r1 != r2) throw GraphError("tensor_inverse matricization is not square");
  std::string key = "tinv:" + a->uid;
  Node n;
  n.kind = NodeKind::TensorInverse;
  // Result axes are (column group, row group) of the input, so contracting
  // the result's trailing axes against the input's leading axes matricizes
  // to inverse(T) * T.
  Shape shape(a->shape.begin() + half, a->shape.end());
  shape.insert(shape.end(), a->shape.begin(), a->shape.begin() + half);
  n.shape = std::move(shape);
  n.inputs = {a};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr transpose(NodePtr a, std::vector<int> perm) {
  if (static_cast<int64_t>(perm.size()) != a->order())
    throw GraphError("transpose permutation length mismatch");
  std::vector<bool> seen(perm.size(), false);
  bool is_identity = true;
  for (size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] < 0 || perm[i] >= static_cast<int>(perm.size()) || seen[perm[i]])
      throw GraphError("transpose permutation is not a permutation");
    seen[perm[i]] = true;
    if (perm[i] != static_cast<int>(i)) is_identity = false;
  }
  if (is_identity) return a;
  std::string key = "transpose:" + a->uid + ":";
  for (int p : perm) key += std::to_string(p) + ",";
  Node n;
  n.kind = NodeKind::Transpose;
  for (int p : perm) n.shape.push_back(a->shape[p]);
  n.perm = std::move(perm);
  n.inputs = {a};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr clone(NodePtr a) {
  std::string key = "clone:" + a->uid;
  Node n;
  n.kind = NodeKind::Clone;
  n.shape = a->shape;
  n.inputs = {a};
  return NodeStore::instance().intern(key, std::move(n));
}

NodePtr tensordot(NodePtr a, NodePtr b) {
  int64_t k = b->order();
  if (a->order() < k) throw GraphError("tensordot: first operand order too small");
  int64_t lead = a->order() - k;
  EinsumSpec spec;
  std::vector<AxisLabel> a_axes, b_axes, out;
  for (int64_t i = 0; i < a->order(); ++i) a_axes.push_back(static_cast<AxisLabel>(i));
  for (int64_t i = 0; i < k; ++i) {
    if (a->shape[lead + i] != b->shape[i])
      throw GraphError("tensordot extent mismatch");
    b_axes.push_back(static_cast<AxisLabel>(lead + i));
  }
  for (int64_t i = 0; i < lead; ++i) out.push_back(static_cast<AxisLabel>(i));
  spec.operands = {a_axes, b_axes};
  spec.output = out;
  return make_einsum(std::move(spec), {a, b});
}

// ---- graph ----

Graph::Graph(std::vector<NodePtr> sink_list) : sinks(std::move(sink_list)) {
  for (auto& n : topo_order(sinks)) store[n->uid] = n;
}

std::vector<NodePtr> topo_order(const std::vector<NodePtr>& sinks) {
  std::vector<NodePtr> order;
  std::set<std::string> visited;
  // Iterative DFS, children first.
  std::vector<std::pair<NodePtr, size_t>> stack;
  for (auto& s : sinks) {
    if (visited.count(s->uid)) continue;
    stack.emplace_back(s, 0);
    visited.insert(s->uid);
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->inputs.size()) {
        NodePtr child = node->inputs[idx++];
        if (!visited.count(child->uid)) {
          visited.insert(child->uid);
          stack.emplace_back(child, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }
  return order;
}

std::string to_dot(const Graph& g) {
  auto nodes = topo_order(g.sinks);
  std::set<std::string> sink_uids;
  for (auto& s : g.sinks) sink_uids.insert(s->uid);
  std::ostringstream os;
  os << "digraph G {\n";
  for (auto& n : nodes) {
    std::string label = std::string(kind_name(n->kind)) + "\\n" + shape_to_string(n->shape);
    if (n->kind == NodeKind::Variable) label = n->name + "\\n" + shape_to_string(n->shape);
    if (n->kind == NodeKind::Einsum) label += "\\n" + n->spec.to_string();
    if (n->kind == NodeKind::ScalarMul) label += "\\n*" + std::to_string(n->scalar);
    os << "  n" << n->uid << " [label=\"" << label << "\"";
    if (n->kind == NodeKind::Variable) os << ", color=green";
    if (sink_uids.count(n->uid)) os << ", color=purple";
    os << "];\n";
  }
  for (auto& n : nodes) {
    for (auto& in : n->inputs) os << "  n" << in->uid << " -> n" << n->uid << ";\n";
  }
  os << "}\n";
  return os.str();
}

// ---- serialization ----

using nlohmann::json;

static json spec_to_json(const EinsumSpec& spec) {
  json j;
  j["operands"] = spec.operands;
  j["output"] = spec.output;
  json ext = json::object();
  for (auto& [id, e] : spec.extents) ext[std::to_string(id)] = e;
  j["extents"] = ext;
  return j;
}

std::string serialize(const Graph& g) {
  json nodes = json::array();
  for (auto& n : topo_order(g.sinks)) {
    json j;
    j["uid"] = n->uid;
    j["kind"] = kind_name(n->kind);
    j["shape"] = n->shape;
    json ins = json::array();
    for (auto& in : n->inputs) ins.push_back(in->uid);
    if (!ins.empty() && n->kind != NodeKind::Clone) j["inputs"] = ins;
    switch (n->kind) {
      case NodeKind::Variable: j["name"] = n->name; break;
      case NodeKind::Constant: j["data"] = n->value.values(); break;
      case NodeKind::Identity: j["extent"] = n->extent; break;
      case NodeKind::Einsum: j["spec"] = spec_to_json(n->spec); break;
      case NodeKind::ScalarMul: j["scalar"] = n->scalar; break;
      case NodeKind::Transpose: j["perm"] = n->perm; break;
      case NodeKind::Clone: j["clone_of"] = n->inputs[0]->uid; break;
      default: break;
    }
    nodes.push_back(std::move(j));
  }
  json sinks = json::array();
  for (auto& s : g.sinks) sinks.push_back(s->uid);
  json doc;
  doc["nodes"] = nodes;
  doc["sinks"] = sinks;
  return doc.dump(2);
}

Graph deserialize(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GraphError(std::string("graph parse error: ") + e.what());
  }
  if (!doc.contains("nodes") || !doc.contains("sinks"))
    throw GraphError("graph parse error: missing 'nodes' or 'sinks'");

  std::map<std::string, NodePtr> built;
  auto lookup = [&](const std::string& uid) -> NodePtr {
    auto it = built.find(uid);
    if (it == built.end())
      throw GraphError("graph parse error: reference to unknown node uid " + uid);
    return it->second;
  };

  for (auto& j : doc["nodes"]) {
    std::string kind = j.at("kind").get<std::string>();
    Shape shape = j.value("shape", Shape{});
    std::vector<NodePtr> inputs;
    if (j.contains("inputs"))
      for (auto& uid : j["inputs"]) inputs.push_back(lookup(uid.get<std::string>()));

    NodePtr n;
    if (kind == "variable") {
      n = variable(j.at("name").get<std::string>(), shape);
    } else if (kind == "constant") {
      n = constant(DenseTensor(shape, j.at("data").get<std::vector<double>>()));
    } else if (kind == "identity") {
      n = identity(j.at("extent").get<int64_t>());
    } else if (kind == "einsum") {
      EinsumSpec spec;
      spec.operands = j.at("spec").at("operands").get<std::vector<std::vector<AxisLabel>>>();
      spec.output = j.at("spec").at("output").get<std::vector<AxisLabel>>();
      n = make_einsum(std::move(spec), std::move(inputs));
    } else if (kind == "add") {
      n = add(std::move(inputs));
    } else if (kind == "sub") {
      if (inputs.size() != 2) throw GraphError("graph parse error: sub needs 2 inputs");
      n = sub(inputs[0], inputs[1]);
    } else if (kind == "negate") {
      n = negate(inputs.at(0));
    } else if (kind == "scalar_mul") {
      n = scalar_mul(j.at("scalar").get<double>(), inputs.at(0));
    } else if (kind == "scalar_inverse") {
      n = scalar_inverse(inputs.at(0));
    } else if (kind == "tensor_inverse") {
      n = tensor_inverse(inputs.at(0));
    } else if (kind == "transpose") {
      n = transpose(inputs.at(0), j.at("perm").get<std::vector<int>>());
    } else if (kind == "clone") {
      n = clone(lookup(j.at("clone_of").get<std::string>()));
    } else {
      throw GraphError("graph parse error: unknown node kind '" + kind + "'");
    }
    if (!shape.empty() && n->shape != shape)
      throw GraphError("graph parse error: stored shape disagrees with inferred shape");
    built[j.at("uid").get<std::string>()] = n;
  }

  std::vector<NodePtr> sinks;
  for (auto& uid : doc["sinks"]) sinks.push_back(lookup(uid.get<std::string>()));
  return Graph(std::move(sinks));
}

bool structurally_equal(const Graph& a, const Graph& b) {
  if (a.sinks.size() != b.sinks.size()) return false;
  for (size_t i = 0; i < a.sinks.size(); ++i)
    if (a.sinks[i]->uid != b.sinks[i]->uid) return false;
  return true;
}

}  // namespace einopt
