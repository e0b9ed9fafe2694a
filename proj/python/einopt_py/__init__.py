"""Python bindings for the einsum graph compiler."""

try:
    from . import _einopt as _einopt  # packaged layout
except ImportError:
    import _einopt  # build-tree layout, extension on sys.path

import sys as _sys

_sys.modules.setdefault("_einopt", _einopt)

from _einopt import (  # noqa: F401,E402
    AutodiffError,
    CounterRng,
    ExecError,
    Graph,
    GraphError,
    Node,
    SingularMatrixError,
    add,
    add_n,
    clone,
    constant,
    count_einsums_touching,
    cse,
    decompose_inverse,
    deserialize,
    distribute,
    einsum,
    evaluate,
    flop_estimate,
    fuse_einsums,
    generate_dimension_tree,
    gradients,
    hessian,
    hvp,
    identity,
    jacobian,
    jvp,
    negate,
    normalize_algebra,
    optimize,
    prune_identity,
    prune_inverse,
    run,
    scalar_inverse,
    scalar_mul,
    serialize,
    structurally_equal,
    sub,
    tensor_inverse,
    tensordot,
    to_dot,
    transpose,
    variable,
    vjp,
    zeros,
)
