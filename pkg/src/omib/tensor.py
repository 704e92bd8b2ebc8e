"""Dense reverse-mode automatic differentiation on top of numpy.

Every forward op executed while a :class:`Graph` is active is appended to
that graph's tape together with a closure computing the vector-Jacobian
product. Ops executed with no active graph are plain numpy evaluations and
carry no gradient information, which is how inference runs.

    >>> with Graph() as g:
    ...     x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ...     loss = (x * x).sum()
    >>> backward(g, loss)
    >>> x.grad
    array([2., 4., 6.])
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64
LOG_CLAMP = 1e-12

_GELU_C = math.sqrt(2.0 / math.pi)

_active: list["Graph"] = []


class ShapeError(ValueError):
    """Raised when an op receives inputs of incompatible shapes."""


class NumericError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


class Tensor:
    """A float64 array that may participate in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "graph", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        # ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self.graph: Graph | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


class _Record:
    __slots__ = ("kind", "inputs", "output", "vjp")

    def __init__(self, kind, inputs, output, vjp):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Graph:
    """Tape of op records for one forward/backward pass.

    Use as a context manager. Records are appended in execution order, which
    is already a topological order, so backward is a single reverse sweep.
    A graph can be backpropagated once; it is closed afterwards.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.closed = False

    def __enter__(self) -> "Graph":
        if self.closed:
            raise RuntimeError("graph already consumed; create a fresh Graph per step")
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def _record(self, kind, inputs, output, vjp):
        output.node_id = len(self.records)
        output.graph = self
        output.requires_grad = True
        self.records.append(_Record(kind, inputs, output, vjp))


def active_graph() -> Graph | None:
    return _active[-1] if _active else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(t: Tensor, g: Graph) -> bool:
    return t.requires_grad and (t.graph is None or t.graph is g)


def _emit(kind: str, out: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    if not np.all(np.isfinite(out)):
        shapes = ", ".join(str(t.shape) for t in inputs)
        raise NumericError(f"{kind}: non-finite output (input shapes {shapes})")
    result = Tensor(out)
    g = active_graph()
    if g is not None and any(_tracked(t, g) for t in inputs):
        g._record(kind, tuple(inputs), result, vjp)
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shapes(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(
        "mul",
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def reciprocal(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data
    return _emit("reciprocal", out, (a,), lambda g: (-g * out * out,))


def matmul(a, b) -> Tensor:
    """Matrix product with numpy broadcasting over leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2 and ad.ndim > 2:
        # Stacked rows times one matrix: flatten so the weight gradient is one GEMM.
        lead = ad.shape[:-1]
        flat = ad.reshape(-1, ad.shape[-1])

        def vjp(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bd.T).reshape(ad.shape), flat.T @ g2

        return _emit("matmul", (flat @ bd).reshape(*lead, bd.shape[1]), (a, b), vjp)

    def vjp(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _emit("matmul", ad @ bd, (a, b), vjp)


# -- structural ------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(
            t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax
        ):
            shapes = [t.shape for t in tensors]
            raise ShapeError(f"concat(axis={axis}): incompatible shapes {shapes}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g):
        idx = [slice(None)] * nd
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[ax] = slice(lo, hi)
            parts.append(g[tuple(idx)])
        return tuple(parts)

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, vjp)


def slice_(a, index) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    fancy = any(
        isinstance(i, (list, np.ndarray)) for i in (index if isinstance(index, tuple) else (index,))
    )

    def vjp(g):
        out = np.zeros(shape, dtype=DTYPE)
        if fancy:
            np.add.at(out, index, g)
        else:
            out[index] += g
        return (out,)

    return _emit("slice", np.array(a.data[index], dtype=DTYPE), (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {shape}") from None
    return _emit("reshape", out, (a,), lambda g: (g.reshape(old),))


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    return _emit(
        "swapaxes",
        np.swapaxes(a.data, ax1, ax2),
        (a,),
        lambda g: (np.swapaxes(g, ax1, ax2),),
    )


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {old} to {shape}") from None
    return _emit("broadcast", out.copy(), (a,), lambda g: (_unbroadcast(g, old),))


def stop_gradient(a) -> Tensor:
    """Same values, no gradient path back to ``a``."""
    return Tensor(as_tensor(a).data)


# -- reductions ------------------------------------------------------------


def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _emit(
        "sum",
        np.asarray(a.data.sum(axis=axis, keepdims=keepdims)),
        (a,),
        lambda g: (_expand(g, shape, axis, keepdims).copy(),),
    )


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([shape[i] for i in axes]))
    return _emit(
        "mean",
        np.asarray(a.data.mean(axis=axis, keepdims=keepdims)),
        (a,),
        lambda g: (_expand(g, shape, axis, keepdims) / count,),
    )


# -- elementwise unary -----------------------------------------------------


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _emit("relu", a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _emit("leaky_relu", a.data * factor, (a,), lambda g: (g * factor,))


def gelu(a) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)

    return _emit("gelu", out, (a,), vjp)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # overflow surfaces as NumericError below
        out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    """Natural log with the input clamped below at ``LOG_CLAMP``."""
    a = as_tensor(a)
    x = a.data
    clamped = np.maximum(x, LOG_CLAMP)
    live = x >= LOG_CLAMP
    return _emit("log", np.log(clamped), (a,), lambda g: (g * live / clamped,))


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _emit("square", x * x, (a,), lambda g: (2.0 * g * x,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), vjp)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", out, (a,), vjp)


def logsumexp(a, axis=None) -> Tensor:
    """Max-shifted log-sum-exp; safe for inputs up to about +-700 and beyond."""
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    s = np.exp(a.data - m)
    tot = s.sum(axis=axis, keepdims=True)
    out = np.log(tot) + m
    w = s / tot
    squeezed = np.squeeze(out, axis=axis)

    def vjp(g):
        gg = g if axis is None else np.expand_dims(g, axis)
        return (w * gg,)

    return _emit("logsumexp", np.asarray(squeezed), (a,), vjp)


# -- backward --------------------------------------------------------------


def backward(graph: Graph, loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf with ``requires_grad`` reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers, so call
    :func:`zero_grad` (or let the optimizer do it) between steps.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if graph.closed:
        raise RuntimeError("backward: graph already consumed")
    if loss.graph is not graph:
        raise RuntimeError("backward: loss was not produced on this graph (detached)")
    graph.closed = True
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for rec in reversed(graph.records):
        g = grads.pop(rec.output.node_id, None)
        if g is None:
            continue
        in_grads = rec.vjp(g)
        for t, gi in zip(rec.inputs, in_grads):
            if not t.requires_grad:
                continue
            if t.graph is graph:
                prev = grads.get(t.node_id)
                grads[t.node_id] = gi if prev is None else prev + gi
            elif t.graph is None:
                gi = np.asarray(gi, dtype=DTYPE).reshape(t.shape)
                t.grad = gi.copy() if t.grad is None else t.grad + gi
    graph.records.clear()


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def gradient_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    max_coords: int = 20,
    seed: int = 0,
) -> float:
    """Max relative error between backprop gradients and central differences.

    ``f`` builds a scalar from ``params`` and must be deterministic: any
    random draws inside it have to be frozen by the caller. Up to
    ``max_coords`` coordinates per parameter are sampled.
    """
    rng = np.random.default_rng(seed)
    zero_grad(params)
    with Graph() as g:
        loss = f()
    backward(g, loss)
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    def value() -> float:
        return float(f().data)

    base = value()
    if value() != base:
        raise ValueError(
            "gradient_check: f is not deterministic; freeze stochastic inputs "
            "(e.g. pass fixed noise tensors) before checking"
        )
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(n, max_coords), replace=False)
        for i in coords:
            old = flat[i]
            flat[i] = old + h
            up = value()
            flat[i] = old - h
            down = value()
            flat[i] = old
            num = (up - down) / (2 * h)
            ana = a.reshape(-1)[i]
            err = abs(ana - num) / (abs(ana) + abs(num) + 1e-12)
            worst = max(worst, err)
    return worst
