#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "einopt/tensor.hpp"

namespace einopt {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Axis labels are integer ids, unique within one EinsumSpec. A printer maps
// ids to letters for display; ids remove the 52-character subscript limit.
using AxisLabel = int;

struct EinsumSpec {
  std::vector<std::vector<AxisLabel>> operands;
  std::vector<AxisLabel> output;
  std::map<AxisLabel, int64_t> extents;

  size_t arity() const { return operands.size(); }
  std::string to_string() const;  // e.g. "ij,jk->ik"
};

// Parses a subscript string like "ij,jk->ik". Characters map to small ids.
EinsumSpec parse_subscripts(const std::string& subscripts,
                            const std::vector<Shape>& operand_shapes);

enum class NodeKind {
  Variable,
  Constant,
  Identity,       // order-2 Kronecker delta
  Einsum,
  Add,            // n-ary, commutative
  Sub,
  Negate,
  ScalarMul,      // literal scalar times tensor
  ScalarInverse,  // 1/x on an order-0 node
  TensorInverse,  // inverse of the matricized even-order tensor
  Transpose,      // axis permutation
  Clone,          // linearization helper
};

const char* kind_name(NodeKind k);

struct Node;
using NodePtr = std::shared_ptr<const Node>;

// Immutable, hash-consed graph node. Structurally identical subgraphs share
// one node; uid is a content hash of (kind, canonical spec, input uids), so
// equal uids mean the same computation.
struct Node {
  NodeKind kind;
  Shape shape;
  std::string uid;
  uint64_t seq = 0;  // construction order, used as a deterministic tie-break
  std::vector<NodePtr> inputs;

  std::string name;      // Variable
  DenseTensor value;     // Constant
  int64_t extent = 0;    // Identity
  EinsumSpec spec;       // Einsum, stored in canonical form
  std::vector<int> operand_perm;  // Einsum: canonical position -> original position
  double scalar = 0.0;   // ScalarMul
  std::vector<int> perm; // Transpose

  int64_t order() const { return static_cast<int64_t>(shape.size()); }
};

// Constructors. All of them validate shapes at construction and intern the
// result in a process-wide store.
NodePtr variable(const std::string& name, Shape shape);
NodePtr constant(DenseTensor value);
NodePtr zeros(const Shape& shape);
NodePtr identity(int64_t extent);
NodePtr make_einsum(EinsumSpec spec, std::vector<NodePtr> inputs);
NodePtr make_einsum(const std::string& subscripts, std::vector<NodePtr> inputs);
NodePtr add(std::vector<NodePtr> inputs);
NodePtr add(NodePtr a, NodePtr b);
NodePtr sub(NodePtr a, NodePtr b);
NodePtr negate(NodePtr a);
NodePtr scalar_mul(double c, NodePtr a);
NodePtr scalar_mul(NodePtr s, NodePtr a);  // order-0 node scalar, lowered to einsum
NodePtr scalar_inverse(NodePtr a);
NodePtr tensor_inverse(NodePtr a);
NodePtr transpose(NodePtr a, std::vector<int> perm);
NodePtr clone(NodePtr a);

// Contracts the trailing axes of a against the axes of b (matches the order
// of b), e.g. tensordot(H[i,r,i',r'], g[i',r']) -> [i,r].
NodePtr tensordot(NodePtr a, NodePtr b);

inline const std::string& canonical_uid(const NodePtr& n) { return n->uid; }

struct Graph {
  std::vector<NodePtr> sinks;
  std::map<std::string, NodePtr> store;  // canonical uid -> node

  Graph() = default;
  explicit Graph(std::vector<NodePtr> sink_list);

  size_t node_count() const { return store.size(); }
};

// Reachable nodes in a deterministic topological order (inputs first).
std::vector<NodePtr> topo_order(const std::vector<NodePtr>& sinks);

std::string to_dot(const Graph& g);

std::string serialize(const Graph& g);
Graph deserialize(const std::string& text);

bool structurally_equal(const Graph& a, const Graph& b);

}  // namespace einopt
