#include "doctest.h"
#include "einopt/graph.hpp"

using namespace einopt;

TEST_CASE("hash consing interns structurally equal nodes") {
  NodePtr a1 = variable("A", {2, 3});
  NodePtr a2 = variable("A", {2, 3});
  CHECK(a1.get() == a2.get());

  NodePtr b = variable("B", {3, 4});
  NodePtr m1 = make_einsum("ij,jk->ik", {a1, b});
  NodePtr m2 = make_einsum("ij,jk->ik", {a2, b});
  CHECK(m1.get() == m2.get());
  CHECK(m1->uid == m2->uid);
}

TEST_CASE("einsum canonicalization is label and operand-order independent") {
  NodePtr a = variable("A", {2, 3});
  NodePtr b = variable("B", {3, 4});
  NodePtr m1 = make_einsum("ij,jk->ik", {a, b});
  NodePtr m2 = make_einsum("pq,qr->pr", {a, b});
  CHECK(m1->uid == m2->uid);

  // same contraction written with the operands swapped
  NodePtr m3 = make_einsum("jk,ij->ik", {b, a});
  CHECK(m1->uid == m3->uid);
}

TEST_CASE("add is commutative under interning") {
  NodePtr a = variable("A", {4});
  NodePtr b = variable("B", {4});
  CHECK(add(a, b)->uid == add(b, a)->uid);
}

TEST_CASE("transpose with identity permutation is a no-op") {
  NodePtr a = variable("A", {2, 3});
  CHECK(transpose(a, {0, 1}).get() == a.get());
  CHECK(transpose(a, {1, 0})->shape == Shape{3, 2});
}

TEST_CASE("einsum shape validation") {
  NodePtr a = variable("A", {2, 3});
  NodePtr b = variable("B", {4, 5});
  CHECK_THROWS_AS(make_einsum("ij,jk->ik", {a, b}), GraphError);          // extent clash
  CHECK_THROWS_AS(make_einsum("ij,jk->iz", {a, variable("C", {3, 4})}),
                  GraphError);                                            // unknown output axis
  CHECK_THROWS_AS(make_einsum("ij,jk->ii", {a, variable("C", {3, 2})}),
                  GraphError);                                            // repeated output axis
  CHECK_THROWS_AS(make_einsum("ij->ij", {variable("v", {3})}), GraphError);
}

TEST_CASE("einsum output shape follows the output labels") {
  NodePtr t = variable("T", {2, 3, 4});
  NodePtr m = make_einsum("ijk->kj", {t});
  CHECK(m->shape == Shape{4, 3});
}

TEST_CASE("tensor inverse shape swaps the row and column groups") {
  NodePtr a = variable("A", {2, 3, 2, 3});
  CHECK(tensor_inverse(a)->shape == Shape{2, 3, 2, 3});
  NodePtr b = variable("B", {4, 2, 2});
  CHECK_THROWS_AS(tensor_inverse(b), GraphError);  // odd order
  NodePtr c = variable("C", {4, 2});
  CHECK_THROWS_AS(tensor_inverse(c), GraphError);  // non-square matricization
}

TEST_CASE("topo order puts inputs before consumers and is deterministic") {
  NodePtr a = variable("A", {2, 2});
  NodePtr b = variable("B", {2, 2});
  NodePtr m = make_einsum("ij,jk->ik", {a, b});
  NodePtr s = add(m, a);
  auto order1 = topo_order({s});
  auto order2 = topo_order({s});
  REQUIRE(order1.size() == order2.size());
  for (size_t i = 0; i < order1.size(); ++i) CHECK(order1[i]->uid == order2[i]->uid);
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < order1.size(); ++i) pos[order1[i]->uid] = i;
  for (auto& n : order1)
    for (auto& in : n->inputs) CHECK(pos[in->uid] < pos[n->uid]);
}

TEST_CASE("serialize round trip preserves structure") {
  NodePtr a = variable("A", {2, 3});
  NodePtr b = variable("B", {3, 3});
  NodePtr g = add(make_einsum("ij,jk->ik", {a, b}), scalar_mul(2.0, a));
  NodePtr s = sub(g, transpose(transpose(g, {1, 0}), {1, 0}));
  Graph graph({s, tensor_inverse(add(make_einsum("ki,kj->ij", {b, b}), identity(3)))});
  Graph back = deserialize(serialize(graph));
  CHECK(structurally_equal(graph, back));
}

TEST_CASE("deserialize rejects malformed input") {
  CHECK_THROWS_AS(deserialize("not a graph"), GraphError);
}

TEST_CASE("dot export names every reachable node") {
  NodePtr a = variable("A", {2, 2});
  Graph g({add(a, a)});
  std::string dot = to_dot(g);
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("A") != std::string::npos);
}

TEST_CASE("scalar node constructors validate orders") {
  NodePtr s = make_einsum("i,i->", {variable("x", {3}), variable("y", {3})});
  CHECK(s->order() == 0);
  CHECK_NOTHROW(scalar_inverse(s));
  CHECK_THROWS_AS(scalar_inverse(variable("A", {2, 2})), GraphError);
  NodePtr scaled = scalar_mul(s, variable("A", {2, 2}));
  CHECK(scaled->shape == Shape{2, 2});
}
