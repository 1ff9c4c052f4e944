"""Reverse-mode automatic differentiation over dense float64 arrays.

A small tape engine: each operation appends a node to a Graph, and
``backward`` walks the tape once in reverse, accumulating vector-Jacobian
products into per-leaf gradient buffers.  Tensors are immutable wrappers
around numpy arrays; anything that is not a Tensor (floats, ndarrays) is
treated as a constant and receives no gradient.

Every public math function accepts either a Tensor or a plain array, so
numeric code can be written once and run both inside and outside the tape.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DiffError", "ShapeError", "DomainError", "Graph", "Tensor",
    "set_checked", "is_checked", "backward",
    "exp", "log", "sqrt", "sin", "cos", "tanh", "sigmoid", "softplus",
    "absolute", "clamp", "powc", "cumsum", "concat", "reshape",
    "matmul", "tsum", "tmean", "relu", "value_of",
]


class DiffError(Exception):
    """Base class for autodiff failures."""


class ShapeError(DiffError):
    pass


class DomainError(DiffError):
    pass


_CHECKED = False


def set_checked(flag: bool) -> None:
    """Toggle checked mode: per-op finiteness and domain validation.

    Checked mode is meant for tests; training runs leave it off for speed.
    """
    global _CHECKED
    _CHECKED = bool(flag)


def is_checked() -> bool:
    return _CHECKED


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_finite(data: np.ndarray, op: str) -> None:
    if _CHECKED and not np.all(np.isfinite(data)):
        raise DomainError(f"{op}: non-finite values in result")


class _Node:
    __slots__ = ("op", "parents", "vjp", "shape", "param")

    def __init__(self, op, parents, vjp, shape, param=False):
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.shape = shape
        self.param = param


class Graph:
    """Append-only tape of operations; acyclic because inputs precede nodes."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[_Node] = []

    def tensor(self, data, param: bool = False) -> "Tensor":
        """Create a leaf tensor on this graph.

        Leaves with ``param=True`` are the targets of ``backward``; all of
        them receive a gradient buffer (zeros if unreached by the output).
        """
        arr = _as_array(data)
        if _CHECKED and not np.all(np.isfinite(arr)):
            raise DomainError("tensor: non-finite values at creation")
        node = _Node("leaf", (), None, arr.shape, param=param)
        self.nodes.append(node)
        return Tensor(arr, self, len(self.nodes) - 1)

    def param_indices(self):
        return [i for i, n in enumerate(self.nodes) if n.param]


class Tensor:
    """Immutable float64 array attached to a differentiation graph."""

    __slots__ = ("data", "graph", "idx")
    __array_ufunc__ = None  # keep numpy from hijacking mixed expressions

    def __init__(self, data: np.ndarray, graph: Graph, idx: int):
        self.data = data
        self.graph = graph
        self.idx = idx

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, idx={self.idx})"

    # operator sugar, all routed through the module-level functions
    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(other, self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __neg__(self):
        return _neg(self)

    def __pow__(self, expo):
        return powc(self, expo)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)


def value_of(x) -> np.ndarray:
    """The raw array behind ``x``, whether it is a Tensor or not."""
    return x.data if isinstance(x, Tensor) else _as_array(x)


def _graph_of(*xs) -> Graph | None:
    g = None
    for x in xs:
        if isinstance(x, Tensor):
            if g is None:
                g = x.graph
            elif g is not x.graph:
                raise DiffError("operands belong to different graphs")
    return g


def _record(graph, op, data, parents, vjp):
    _check_finite(data, op)
    idxs = tuple(p.idx for p in parents)
    graph.nodes.append(_Node(op, idxs, vjp, data.shape))
    return Tensor(data, graph, len(graph.nodes) - 1)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_check(op, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def _binary(op, x, y, fwd, vjp_maker):
    """Shared plumbing for elementwise binary ops with broadcasting."""
    xv, yv = value_of(x), value_of(y)
    _broadcast_check(op, xv, yv)
    g = _graph_of(x, y)
    out = fwd(xv, yv)
    if g is None:
        _check_finite(out, op)
        return out
    parents = [t for t in (x, y) if isinstance(t, Tensor)]
    vjp = vjp_maker(xv, yv, isinstance(x, Tensor), isinstance(y, Tensor))
    return _record(g, op, out, parents, vjp)


def _add(x, y):
    def maker(xv, yv, tx, ty):
        def vjp(grad):
            out = []
            if tx:
                out.append(_unbroadcast(grad, xv.shape))
            if ty:
                out.append(_unbroadcast(grad, yv.shape))
            return out
        return vjp
    return _binary("add", x, y, lambda a, b: a + b, maker)


def _sub(x, y):
    def maker(xv, yv, tx, ty):
        def vjp(grad):
            out = []
            if tx:
                out.append(_unbroadcast(grad, xv.shape))
            if ty:
                out.append(_unbroadcast(-grad, yv.shape))
            return out
        return vjp
    return _binary("sub", x, y, lambda a, b: a - b, maker)


def _mul(x, y):
    def maker(xv, yv, tx, ty):
        def vjp(grad):
            out = []
            if tx:
                out.append(_unbroadcast(grad * yv, xv.shape))
            if ty:
                out.append(_unbroadcast(grad * xv, yv.shape))
            return out
        return vjp
    return _binary("mul", x, y, lambda a, b: a * b, maker)


def _div(x, y):
    def maker(xv, yv, tx, ty):
        def vjp(grad):
            out = []
            if tx:
                out.append(_unbroadcast(grad / yv, xv.shape))
            if ty:
                out.append(_unbroadcast(-grad * xv / (yv * yv), yv.shape))
            return out
        return vjp
    return _binary("div", x, y, lambda a, b: a / b, maker)


def _neg(x):
    xv = value_of(x)
    if not isinstance(x, Tensor):
        return -xv
    return _record(x.graph, "neg", -xv, [x], lambda grad: [-grad])


def matmul(x, y):
    xv, yv = value_of(x), value_of(y)
    if xv.ndim != 2 or yv.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {xv.shape} and {yv.shape}")
    if xv.shape[1] != yv.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {xv.shape} vs {yv.shape}")
    g = _graph_of(x, y)
    out = xv @ yv
    if g is None:
        _check_finite(out, "matmul")
        return out
    parents = [t for t in (x, y) if isinstance(t, Tensor)]
    tx, ty = isinstance(x, Tensor), isinstance(y, Tensor)

    def vjp(grad):
        res = []
        if tx:
            res.append(grad @ yv.T)
        if ty:
            res.append(xv.T @ grad)
        return res

    return _record(g, "matmul", out, parents, vjp)


def _unary(op, x, fwd, dfun, domain=None):
    """Elementwise unary op; ``dfun(xv, out)`` returns the local derivative."""
    xv = value_of(x)
    if _CHECKED and domain is not None:
        domain(xv)
    out = fwd(xv)
    if not isinstance(x, Tensor):
        _check_finite(out, op)
        return out
    return _record(x.graph, op, out, [x], lambda grad: [grad * dfun(xv, out)])


def exp(x):
    return _unary("exp", x, np.exp, lambda xv, out: out)


def _log_domain(xv):
    if np.any(xv <= 0.0):
        raise DomainError("log: non-positive input")


def log(x):
    return _unary("log", x, np.log, lambda xv, out: 1.0 / xv, domain=_log_domain)


def _sqrt_domain(xv):
    if np.any(xv < 0.0):
        raise DomainError("sqrt: negative input")


def sqrt(x):
    return _unary("sqrt", x, np.sqrt, lambda xv, out: 0.5 / out, domain=_sqrt_domain)


def sin(x):
    return _unary("sin", x, np.sin, lambda xv, out: np.cos(xv))


def cos(x):
    return _unary("cos", x, np.cos, lambda xv, out: -np.sin(xv))


def tanh(x):
    return _unary("tanh", x, np.tanh, lambda xv, out: 1.0 - out * out)


def _sigmoid_np(xv):
    out = np.empty_like(xv)
    pos = xv >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xv[pos]))
    ex = np.exp(xv[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    return _unary("sigmoid", x, _sigmoid_np, lambda xv, out: out * (1.0 - out))


def softplus(x):
    # log(1 + e^x), computed stably as logaddexp(0, x); derivative is sigmoid
    return _unary("softplus", x, lambda xv: np.logaddexp(0.0, xv),
                  lambda xv, out: _sigmoid_np(xv))


def absolute(x):
    return _unary("abs", x, np.abs, lambda xv, out: np.sign(xv))


def relu(x):
    xv = value_of(x)
    out = np.maximum(xv, 0.0)
    if not isinstance(x, Tensor):
        return out
    return _record(x.graph, "relu", out, [x],
                   lambda grad: [np.where(xv > 0.0, grad, 0.0)])


def clamp(x, lo=None, hi=None):
    """Clip to [lo, hi]; gradient flows only where the input is strictly inside."""
    xv = value_of(x)
    out = np.clip(xv, lo, hi)
    if not isinstance(x, Tensor):
        return out
    mask = np.ones_like(xv)
    if lo is not None:
        mask = mask * (xv > lo)
    if hi is not None:
        mask = mask * (xv < hi)
    return _record(x.graph, "clamp", out, [x], lambda grad: [grad * mask])


def powc(x, expo):
    """x ** expo for a constant scalar exponent."""
    expo = float(expo)
    xv = value_of(x)
    if _CHECKED and expo != round(expo) and np.any(xv < 0.0):
        raise DomainError("powc: negative base with non-integer exponent")
    out = xv ** expo
    if not isinstance(x, Tensor):
        _check_finite(out, "powc")
        return out
    return _record(x.graph, "powc", out, [x],
                   lambda grad: [grad * expo * xv ** (expo - 1.0)])


def tsum(x, axis=None, keepdims=False):
    """Sum reduction (named to avoid shadowing the builtin)."""
    xv = value_of(x)
    out = xv.sum(axis=axis, keepdims=keepdims)
    if not isinstance(x, Tensor):
        return out

    def vjp(grad):
        g = np.asarray(grad)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return [np.broadcast_to(g, xv.shape).copy()]

    return _record(x.graph, "sum", np.asarray(out), [x], vjp)


def tmean(x, axis=None, keepdims=False):
    xv = value_of(x)
    if axis is None:
        count = xv.size
    else:
        count = xv.shape[axis]
    return tsum(x, axis=axis, keepdims=keepdims) / float(count)


def cumsum(x, axis=-1):
    xv = value_of(x)
    out = np.cumsum(xv, axis=axis)
    if not isinstance(x, Tensor):
        return out

    def vjp(grad):
        flipped = np.flip(np.cumsum(np.flip(grad, axis=axis), axis=axis), axis=axis)
        return [flipped]

    return _record(x.graph, "cumsum", out, [x], vjp)


def concat(parts, axis=0):
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    g = _graph_of(*parts)
    if g is None:
        return out
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    tensors = [p for p in parts if isinstance(p, Tensor)]
    tensor_slots = [i for i, p in enumerate(parts) if isinstance(p, Tensor)]

    def vjp(grad):
        res = []
        for i in tensor_slots:
            sl = [slice(None)] * grad.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            res.append(grad[tuple(sl)])
        return res

    return _record(g, "concat", out, tensors, vjp)


def reshape(x, shape):
    xv = value_of(x)
    out = xv.reshape(shape)
    if not isinstance(x, Tensor):
        return out
    return _record(x.graph, "reshape", out, [x],
                   lambda grad: [grad.reshape(xv.shape)])


def _getitem(x: Tensor, key):
    out = x.data[key]

    def vjp(grad):
        buf = np.zeros_like(x.data)
        buf[key] += grad
        return [buf]

    return _record(x.graph, "slice", np.asarray(out), [x], vjp)


def backward(out: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a scalar output w.r.t. every parameter leaf of its graph.

    Returns a dict keyed by leaf node index.  Parameters the output does not
    depend on get zero-filled gradients of their own shape.
    """
    if not isinstance(out, Tensor):
        raise DiffError("backward: output is not attached to a graph")
    if out.size != 1:
        raise DiffError(f"backward: output must be scalar, got shape {out.shape}")
    nodes = out.graph.nodes
    grads: dict[int, np.ndarray] = {out.idx: np.ones_like(out.data)}
    for i in range(out.idx, -1, -1):
        g = grads.pop(i, None) if nodes[i].vjp is not None else grads.get(i)
        if g is None:
            continue
        node = nodes[i]
        if node.vjp is None:
            grads[i] = g  # leaf, keep the buffer
            continue
        for pidx, pgrad in zip(node.parents, node.vjp(g)):
            if pidx in grads:
                grads[pidx] = grads[pidx] + pgrad
            else:
                grads[pidx] = pgrad
    result = {}
    for i, node in enumerate(nodes):
        if node.param:
            got = grads.get(i)
            result[i] = np.zeros(node.shape) if got is None else np.asarray(got)
    return result
