"""Tape-based reverse-mode automatic differentiation.

Every operation on a :class:`Var` appends a node to the active :class:`Graph`.
Nodes are stored in creation order, so the tape is already topologically
sorted and a backward sweep is a reverse scan.

Values are float64 scalars or numpy arrays. All operations are polymorphic:
called on plain numbers or arrays they return plain numpy results and record
nothing, called with at least one :class:`Var` operand they record a node.
The vector-Jacobian rules are written with the same functions, which is what
makes ``grad(..., create_graph=True)`` record the backward pass as new
differentiable nodes (reverse-over-reverse).

Differentiation is supported to second order. Asking for a differentiable
gradient of something that already contains first derivatives raises
:class:`OrderError`.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "AutodiffError",
    "NonFiniteError",
    "DomainError",
    "GenerationError",
    "OrderError",
    "Graph",
    "Var",
    "new_graph",
    "active_graph",
    "lift",
    "value_of",
    "grad",
    "grad_of_grad",
    "input_derivative",
    "check_finite",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "exp",
    "log",
    "ln",
    "tanh",
    "sigmoid",
    "silu",
    "sqrt",
    "square",
    "matmul",
    "sum",
    "mean",
    "sum_to",
    "broadcast_to",
    "reshape",
    "transpose",
    "getitem",
    "concat",
    "record",
]


class AutodiffError(Exception):
    """Base class for errors raised by the tape."""


class NonFiniteError(AutodiffError, ValueError):
    pass


class DomainError(AutodiffError, ValueError):
    pass


class GenerationError(AutodiffError):
    pass


class OrderError(AutodiffError):
    pass


_generation_counter = itertools.count(1)


class Graph:
    """Append-only operation record for one generation of variables."""

    def __init__(self) -> None:
        self.generation = next(_generation_counter)
        self.nodes: list[Var] = []
        # derivative order stamped on nodes recorded during a nested backward
        self.recording_order = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"Graph(generation={self.generation}, nodes={len(self.nodes)})"


_active = Graph()


def new_graph() -> Graph:
    """Start a fresh generation; variables from older graphs can no longer mix."""
    global _active
    _active = Graph()
    return _active


def active_graph() -> Graph:
    return _active


def _as_value(x):
    if isinstance(x, np.ndarray):
        if x.dtype != np.float64:
            x = x.astype(np.float64)
        return x if x.ndim else np.float64(x)
    return np.float64(x)


class Var:
    """Differentiable value recorded on a :class:`Graph`."""

    __slots__ = ("value", "graph", "id", "inputs", "vjp", "order", "op", "nested_ok")
    __array_ufunc__ = None  # let numpy defer to the reflected operators

    def __init__(self, value, graph: Graph, inputs=(), vjp=None, op="leaf", nested_ok=True):
        self.value = value
        self.graph = graph
        self.inputs = inputs
        self.vjp = vjp
        self.op = op
        self.nested_ok = nested_ok
        order = graph.recording_order
        for x in inputs:
            if isinstance(x, Var) and x.order > order:
                order = x.order
        self.order = order
        self.id = len(graph.nodes)
        graph.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    @property
    def size(self):
        return np.size(self.value)

    @property
    def generation(self):
        return self.graph.generation

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self) -> str:
        return f"Var({self.value!r}, op={self.op!r}, id={self.id}, gen={self.graph.generation})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _graph_for(operands) -> Graph | None:
    graph = None
    for x in operands:
        if isinstance(x, Var):
            if graph is None:
                graph = x.graph
            elif x.graph is not graph:
                raise GenerationError(
                    f"operands from generations {graph.generation} and {x.graph.generation}"
                )
    if graph is not None and graph is not _active:
        raise GenerationError(
            f"variable from stale generation {graph.generation} (active is {_active.generation})"
        )
    return graph


def lift(x) -> Var:
    """Embed a real number or array as a leaf of the active graph."""
    value = _as_value(x)
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"cannot lift non-finite value {x!r}")
    return Var(value, _active)


def record(value, inputs: Sequence, vjp: Callable, op: str, nested_ok: bool = True):
    """Record a custom node.

    ``vjp(g, out, inputs, needs)`` must return one adjoint per input (``None``
    where ``needs`` is false). When ``nested_ok`` is false the rule is written
    with raw numpy and cannot be differentiated again.
    """
    graph = _graph_for(inputs)
    if graph is None:
        return value
    return Var(value, graph, tuple(inputs), vjp, op, nested_ok)


# ---------------------------------------------------------------- elementwise


def _unbroadcast(g, shape):
    if np.shape(value_of(g)) == tuple(shape):
        return g
    return sum_to(g, shape)


def _binary(a, b, fn, vjp, op):
    va, vb = value_of(a), value_of(b)
    out = fn(va, vb)
    if not isinstance(a, Var) and not isinstance(b, Var):
        return out
    return record(out, (a, b), vjp, op)


def _add_vjp(g, out, inputs, needs):
    a, b = inputs
    return (
        _unbroadcast(g, np.shape(value_of(a))) if needs[0] else None,
        _unbroadcast(g, np.shape(value_of(b))) if needs[1] else None,
    )


def add(a, b):
    return _binary(a, b, np.add, _add_vjp, "add")


def _sub_vjp(g, out, inputs, needs):
    a, b = inputs
    return (
        _unbroadcast(g, np.shape(value_of(a))) if needs[0] else None,
        _unbroadcast(neg(g), np.shape(value_of(b))) if needs[1] else None,
    )


def sub(a, b):
    return _binary(a, b, np.subtract, _sub_vjp, "sub")


def _mul_vjp(g, out, inputs, needs):
    a, b = inputs
    return (
        _unbroadcast(mul(g, b), np.shape(value_of(a))) if needs[0] else None,
        _unbroadcast(mul(g, a), np.shape(value_of(b))) if needs[1] else None,
    )


def mul(a, b):
    return _binary(a, b, np.multiply, _mul_vjp, "mul")


def _div_vjp(g, out, inputs, needs):
    a, b = inputs
    return (
        _unbroadcast(div(g, b), np.shape(value_of(a))) if needs[0] else None,
        _unbroadcast(neg(div(mul(g, out), b)), np.shape(value_of(b))) if needs[1] else None,
    )


def div(a, b):
    return _binary(a, b, np.divide, _div_vjp, "div")


def _unary(x, fn, vjp, op):
    out = fn(value_of(x))
    if not isinstance(x, Var):
        return out
    return record(out, (x,), vjp, op)


def neg(x):
    return _unary(x, np.negative, lambda g, out, inputs, needs: (neg(g),), "neg")


def _pow_vjp(g, out, inputs, needs):
    a, p = inputs
    ga = gp = None
    if needs[0]:
        ga = _unbroadcast(mul(g, mul(p, power(a, sub(p, 1.0)))), np.shape(value_of(a)))
    if needs[1]:
        gp = _unbroadcast(mul(g, mul(out, log(a))), np.shape(value_of(p)))
    return ga, gp


def power(a, p):
    if isinstance(p, Var) and np.any(value_of(a) <= 0):
        raise DomainError("power with variable exponent needs a positive base")
    return _binary(a, p, np.power, _pow_vjp, "pow")


def square(x):
    return mul(x, x)


def exp(x):
    return _unary(x, np.exp, lambda g, out, inputs, needs: (mul(g, out),), "exp")


def log(x):
    if np.any(value_of(x) <= 0):
        raise DomainError("log of a non-positive value")
    return _unary(x, np.log, lambda g, out, inputs, needs: (div(g, inputs[0]),), "ln")


ln = log


def sqrt(x):
    if np.any(value_of(x) <= 0):
        raise DomainError("sqrt needs a positive argument")
    return _unary(x, np.sqrt, lambda g, out, inputs, needs: (div(mul(g, 0.5), out),), "sqrt")


def tanh(x):
    return _unary(
        x, np.tanh, lambda g, out, inputs, needs: (mul(g, sub(1.0, mul(out, out))),), "tanh"
    )


def _np_sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x):
    return _unary(
        x, _np_sigmoid, lambda g, out, inputs, needs: (mul(g, mul(out, sub(1.0, out))),), "sigmoid"
    )


def _silu_vjp(g, out, inputs, needs):
    (x,) = inputs
    s = sigmoid(x)
    # d silu = s (1 + x (1 - s))
    return (mul(g, mul(s, add(1.0, mul(x, sub(1.0, s))))),)


def silu(x):
    return _unary(x, lambda v: v * _np_sigmoid(v), _silu_vjp, "silu")


# ---------------------------------------------------------------- structural


def _matmul_vjp(g, out, inputs, needs):
    a, b = inputs
    ga = gb = None
    if needs[0]:
        ga = _unbroadcast(matmul(g, transpose(b)), np.shape(value_of(a)))
    if needs[1]:
        gb = _unbroadcast(matmul(transpose(a), g), np.shape(value_of(b)))
    return ga, gb


def matmul(a, b):
    """Matrix product of 2-D operands; ``a`` may carry leading stack axes."""
    if np.ndim(value_of(a)) < 2 or np.ndim(value_of(b)) != 2:
        raise ValueError("matmul expects a (..., m, k) @ (k, n)")
    return _binary(a, b, np.matmul, _matmul_vjp, "matmul")


def _swap_last(v):
    return np.swapaxes(v, -1, -2) if np.ndim(v) >= 2 else v


def transpose(x):
    return _unary(x, _swap_last, lambda g, out, inputs, needs: (transpose(g),), "transpose")


def reshape(x, shape):
    old = np.shape(value_of(x))
    return _unary(
        x,
        lambda v: np.reshape(v, shape),
        lambda g, out, inputs, needs: (reshape(g, old),),
        "reshape",
    )


def _normalize_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    shape = np.shape(value_of(x))

    def vjp(g, out, inputs, needs):
        if not keepdims and shape:
            kept = list(shape)
            for a in _normalize_axis(axis, len(shape)):
                kept[a] = 1
            g = reshape(g, tuple(kept))
        return (broadcast_to(g, shape),)

    return _unary(x, lambda v: _as_value(np.sum(v, axis=axis, keepdims=keepdims)), vjp, "sum")


def mean(x, axis=None, keepdims=False):
    shape = np.shape(value_of(x))
    count = 1
    for a in _normalize_axis(axis, len(shape)):
        count *= shape[a]
    return div(sum(x, axis=axis, keepdims=keepdims), float(count))


def _sum_to_value(v, shape):
    shape = tuple(shape)
    vshape = np.shape(v)
    lead = len(vshape) - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(shape) if s == 1 and vshape[lead + i] != 1
    )
    out = np.sum(v, axis=axes, keepdims=True) if axes else v
    return _as_value(np.reshape(out, shape))


def sum_to(x, shape):
    """Sum a broadcast result back down to ``shape``."""
    shape = tuple(shape)
    return _unary(
        x,
        lambda v: _sum_to_value(v, shape),
        lambda g, out, inputs, needs: (broadcast_to(g, np.shape(value_of(inputs[0]))),),
        "sum_to",
    )


def broadcast_to(x, shape):
    shape = tuple(shape)
    old = np.shape(value_of(x))
    if old == shape:
        return x
    return _unary(
        x,
        lambda v: np.broadcast_to(v, shape).copy(),
        lambda g, out, inputs, needs: (sum_to(g, old),),
        "broadcast_to",
    )


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def _scatter(g, index, shape):
    """Adjoint of indexing: place ``g`` at ``index`` in a zero array."""

    basic = _is_basic_index(index)

    def fn(v):
        out = np.zeros(shape)
        if basic:
            out[index] = v
        else:
            np.add.at(out, index, v)
        return out

    return _unary(g, fn, lambda gg, out, inputs, needs: (getitem(gg, index),), "scatter")


def getitem(x, index):
    shape = np.shape(value_of(x))
    return _unary(
        x,
        lambda v: _as_value(v[index]),
        lambda g, out, inputs, needs: (_scatter(g, index, shape),),
        "getitem",
    )


def concat(xs: Sequence, axis: int = 0):
    values = [np.atleast_1d(value_of(x)) for x in xs]
    out = np.concatenate(values, axis=axis)
    if not any(isinstance(x, Var) for x in xs):
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])
    ndim = out.ndim

    def vjp(g, out_, inputs, needs):
        grads = []
        for k, x in enumerate(inputs):
            if not needs[k]:
                grads.append(None)
                continue
            idx = [slice(None)] * ndim
            idx[axis] = slice(bounds[k], bounds[k + 1])
            piece = getitem(g, tuple(idx))
            grads.append(reshape(piece, np.shape(value_of(x))))
        return grads

    return record(out, tuple(xs), vjp, "concat")


# ---------------------------------------------------------------- backward


def _accumulate(adjoints, node_id, g):
    prev = adjoints.get(node_id)
    adjoints[node_id] = g if prev is None else add(prev, g)


def grad(output, wrt, create_graph: bool = False, seed=None):
    """Adjoints of ``output`` with respect to each variable in ``wrt``.

    ``output`` must be a scalar unless ``seed`` (the output cotangent) is
    given. With ``create_graph`` the backward sweep is itself recorded so the
    returned gradients can be differentiated once more.
    """
    single = isinstance(wrt, Var)
    targets = [wrt] if single else list(wrt)
    if not isinstance(output, Var):
        zeros = [np.zeros_like(value_of(w)) if np.ndim(value_of(w)) else 0.0 for w in targets]
        return zeros[0] if single else zeros
    graph = output.graph
    for w in targets:
        if not isinstance(w, Var):
            raise TypeError("can only differentiate with respect to Var")
        if w.graph is not graph:
            raise GenerationError(
                f"wrt variable from generation {w.graph.generation}, output from {graph.generation}"
            )
    if not np.all(np.isfinite(output.value)):
        raise NonFiniteError(f"non-finite value at node {output.id} ({output.op})")
    if seed is None:
        if output.size != 1:
            raise ValueError("output must be scalar; pass seed for a vector-Jacobian product")
        seed = np.ones_like(output.value) if np.ndim(output.value) else np.float64(1.0)
    if create_graph:
        if output.order >= 1:
            raise OrderError("third-order differentiation is not supported")
        if graph is not _active:
            raise GenerationError("cannot record on a stale graph")

    adjoints: dict[int, object] = {output.id: seed}
    lowest = min(w.id for w in targets) if targets else output.id
    saved_order = graph.recording_order
    if create_graph:
        graph.recording_order = output.order + 1
    try:
        nodes = graph.nodes
        for node_id in range(output.id, lowest - 1, -1):
            g = adjoints.get(node_id)
            if g is None:
                continue
            node = nodes[node_id]
            if node.vjp is None:
                continue
            if create_graph and not node.nested_ok:
                raise OrderError(f"op {node.op!r} has no differentiable backward rule")
            inputs = node.inputs
            needs = tuple(isinstance(x, Var) for x in inputs)
            if create_graph:
                grads = node.vjp(g, node, inputs, needs)
            else:
                g = value_of(g)
                grads = node.vjp(g, node.value, tuple(value_of(x) for x in inputs), needs)
            for x, need, gx in zip(inputs, needs, grads):
                if need and gx is not None:
                    _accumulate(adjoints, x.id, gx)
    finally:
        graph.recording_order = saved_order

    result = []
    for w in targets:
        g = adjoints.get(w.id)
        if g is None:
            g = np.zeros_like(w.value) if np.ndim(w.value) else np.float64(0.0)
        elif not create_graph:
            g = _as_value(g)
        result.append(g)
    return result[0] if single else result


def input_derivative(out, x):
    """Differentiable ``d out / d x`` summed over output entries.

    For a batch where row ``j`` of ``out`` depends only on row ``j`` of ``x``
    this is the per-point derivative. The result is recorded on the tape.
    """
    seed = np.ones_like(out.value) if np.ndim(out.value) else np.float64(1.0)
    return grad(out, x, create_graph=True, seed=seed)


def grad_of_grad(loss, params):
    """Parameter gradients of a loss that contains recorded first derivatives.

    The first derivatives must come from ``grad(..., create_graph=True)`` or
    :func:`input_derivative`; this is the second (and last) reverse sweep.
    """
    if isinstance(loss, Var) and loss.order > 1:
        raise OrderError("loss already holds second derivatives")
    return grad(loss, params)


def check_finite(x, where: str = "loss"):
    """Raise :class:`NonFiniteError` when ``x`` holds NaN or Inf."""
    if not np.all(np.isfinite(value_of(x))):
        raise NonFiniteError(f"non-finite value in {where}")
    return x
