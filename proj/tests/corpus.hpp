#pragma once

#include <vector>

#include "einopt/autodiff.hpp"
#include "einopt/graph.hpp"
#include "einopt/methods.hpp"

namespace testutil {

using namespace einopt;

// Shared corpus for semantics-preservation checks: every optimization pattern
// (distribution, identity pruning, fusion, inverse decomposition, inverse
// pruning, CSE with permuted subscripts, path selection, dimension-tree
// shapes) plus derivative graphs for each end-to-end method.
inline std::vector<Graph> semantics_corpus() {
  std::vector<Graph> out;
  auto push = [&](std::vector<NodePtr> sinks) { out.emplace_back(std::move(sinks)); };

  const int64_t n = 3;
  NodePtr A = variable("A", {n, n});
  NodePtr B = variable("B", {n, n});
  NodePtr C = variable("C", {n, n});
  NodePtr D = variable("D", {n, n});
  NodePtr x = variable("x", {n});
  NodePtr y = variable("y", {n});
  NodePtr T = variable("T", {n, n, n});
  NodePtr one = constant(DenseTensor(Shape{}, {1.0}));

  // distribution patterns
  push({make_einsum("ij,jk->ik", {add(A, B), C})});
  push({make_einsum("ij,jk->ik", {A, add(B, C)})});
  push({make_einsum("ij,jk->ik", {sub(A, B), add(C, D)})});
  push({make_einsum("ij,jk->ik", {transpose(add(A, B), {1, 0}), C})});
  push({make_einsum("ij,jk->ik", {add({A, B, C}), D})});

  // fusion / path-selection patterns
  push({make_einsum("ij,jk->ik", {make_einsum("ij,jk->ik", {A, B}),
                                  make_einsum("ij,jk->ik", {C, D})})});
  push({make_einsum("ij,jk,kl,lm->im", {A, B, C, D})});
  push({make_einsum("ijk,jr,kr->ir", {T, variable("F2", {n, n}), variable("F3", {n, n})})});
  push({make_einsum("ijk,ja,kb->iab", {T, A, B})});
  push({make_einsum("ij,ji->", {A, B})});
  push({make_einsum("bij,bjk->bik", {variable("P", {n, n, n}), variable("Q", {n, n, n})})});
  push({make_einsum("ii->i", {A})});
  push({make_einsum("ij,j->i", {make_einsum("i,j->ij", {x, y}), y})});
  push({make_einsum("i,ij,j->", {x, A, x})});
  push({make_einsum("ij,jk->ik", {A, A})});
  push({make_einsum("ij,jk->ik", {A, clone(A)})});
  push({make_einsum("ijk->kji", {T})});
  push({make_einsum("ij->i", {A})});

  // identity patterns
  push({make_einsum("ij,jk->ik", {A, identity(n)})});
  push({make_einsum("ij,ab->iajb", {identity(n), A})});
  push({make_einsum("ij,jk,kl->il", {identity(n), A, identity(n)})});

  // permuted-subscript equivalence (same tensor diagram, different labels)
  {
    NodePtr t1 = make_einsum("ij,jk->ik", {A, B});
    NodePtr t2 = make_einsum("ij,jk->ki", {A, B});
    push({sub(t1, transpose(t2, {1, 0}))});
  }

  // inverse patterns; gram + I keeps every random feed well conditioned
  NodePtr G = add(make_einsum("ki,kj->ij", {A, A}), identity(n));
  NodePtr Gb = add(make_einsum("ki,kj->ij", {B, B}), identity(n));
  push({make_einsum("ij,jk,k->i", {tensor_inverse(G), G, y})});
  push({tensordot(tensor_inverse(G), y)});
  push({tensor_inverse(make_einsum("ac,bd->abcd", {G, Gb}))});
  push({tensor_inverse(identity(n))});

  // scalar algebra
  push({add(scalar_mul(2.5, A), sub(negate(B), scalar_mul(-1.0, C)))});
  push({scalar_mul(scalar_inverse(add(make_einsum("i,i->", {x, x}), one)), y)});

  // derivative graphs for each method
  {
    NodePtr mv = make_einsum("ij,j->i", {A, x});
    push(jacobian(mv, {x}));
    NodePtr quad = make_einsum("i,ij,j->", {x, A, x});
    push(gradients(quad, {x}));
    auto h = hessian(quad, {x});
    push({h[0][0]});
    NodePtr v = variable("v", {n});
    push({jvp(v, mv, x)});
    push({vjp(v, mv, x)});
  }
  {
    CpdProblem p = cpd_graph({3, 3, 3}, 2);
    push({p.loss});
    push(gradients(p.loss, p.factors));
    push({hvp(p.loss, p.factors[0], variable("hv0", p.factors[0]->shape))});
  }
  {
    TuckerProblem p = tucker_graph({3, 3, 3}, {2, 2, 2});
    push({p.loss});
    push({p.ttmc[0]});
  }
  {
    DmrgProblem p = dmrg_graph(3, 2, 2);
    push({p.numerator});
    push({p.denominator});
  }
  return out;
}

}  // namespace testutil
