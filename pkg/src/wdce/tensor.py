"""Dense float64 tensors with tape-ordered reverse-mode differentiation.

Every operation that involves a tensor with ``requires_grad`` records a node
carrying a monotonically increasing sequence number.  ``Tensor.backward``
collects the reachable nodes and replays them in descending sequence order,
which is exactly the reverse of execution order.  A node is released once its
backward has run, so a second backward over the same graph raises
:class:`GraphError` instead of silently double-counting.
"""

from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "GraphError",
    "no_grad",
    "as_tensor",
    "matmul",
    "conv1d",
    "conv2d",
    "add",
    "sub",
    "mul",
    "div",
    "transpose",
    "reshape",
    "sum",
    "mean",
    "relu",
    "sigmoid",
    "softmax",
    "log_softmax",
    "log",
    "exp",
    "l2norm",
    "concatenate",
    "getitem",
]

_seq = itertools.count()
_state = threading.local()


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class GraphError(RuntimeError):
    """Backward requested over a graph that was already consumed."""


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording nodes (evaluation, finite differences)."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_seq", "_released")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._seq = -1
        self._released = False

    @classmethod
    def _node(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out._released = False
        needs = _grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = tuple(parents)
            out._backward = backward
            out._seq = next(_seq)
        else:
            out._parents = ()
            out._backward = None
            out._seq = -1
        return out

    # -- metadata -----------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None and not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    # -- reverse pass ---------------------------------------------------------------
    def backward(self, grad=None) -> list[str]:
        """Propagate gradients to every leaf reachable from this tensor.

        Returns the op names in the order their backward rules ran.
        """
        if not self.requires_grad:
            raise GraphError("tensor does not require grad")
        if self._released:
            raise GraphError("graph already consumed by a previous backward; run a new forward pass")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward on non-scalar {self.shape} needs an explicit grad")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=np.float64)
            if seed.shape != self.shape:
                raise ShapeError(f"shape mismatch: grad {seed.shape} vs output {self.shape}")

        if self.is_leaf:
            self.grad = seed.copy() if self.grad is None else self.grad + seed
            return []

        nodes: list[Tensor] = []
        seen: set[int] = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t._released:
                raise GraphError("graph already consumed by a previous backward; run a new forward pass")
            if t._backward is None:
                continue
            nodes.append(t)
            stack.extend(p for p in t._parents if p.requires_grad)
        nodes.sort(key=lambda t: t._seq, reverse=True)

        pending: dict[int, np.ndarray] = {id(self): seed}
        order = []
        for node in nodes:
            g = pending.pop(id(node), None)
            backward, parents = node._backward, node._parents
            node._released = True
            node._backward = None
            node._parents = ()
            if g is None:
                continue
            order.append(node.op)
            for p, pg in zip(parents, backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if p._backward is None:
                    p.grad = pg.copy() if p.grad is None else p.grad + pg
                else:
                    prev = pending.get(id(p))
                    pending[id(p)] = pg if prev is None else prev + pg
        return order

    # -- operators ------------------------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# -- elementwise binary -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._node(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._node(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._node(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._node(out, (a, b), backward, "div")


# -- linear algebra -------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch shape mismatch {a.shape} vs {b.shape}") from None

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._node(a.data @ b.data, (a, b), backward, "matmul")


def _im2col(xp: np.ndarray, kh: int, kw: int, ho: int, wo: int) -> np.ndarray:
    """``(C*kh*kw, N*Ho*Wo)`` patch matrix; rows ordered (channel, kh, kw)."""
    n, c = xp.shape[:2]
    cols = np.empty((c, kh * kw, n, ho, wo))
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(kh):
        for j in range(kw):
            cols[:, i * kw + j] = xt[:, :, i:i + ho, j:j + wo]
    return cols.reshape(c * kh * kw, n * ho * wo)


def conv2d(x, w, b=None, padding=(0, 0)) -> Tensor:
    """Stride-1 cross-correlation: x (N,C,H,W), w (O,C,kh,kw), b (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: shape mismatch {x.shape} vs {w.shape}")
    ph, pw = padding
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho, wo = h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {w.shape} larger than padded input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    cols = _im2col(xp, kh, kw, ho, wo)
    wflat = w.data.reshape(o, -1)
    out = wflat @ cols  # O, N*Ho*Wo
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (o,):
            raise ShapeError(f"conv2d: bias shape mismatch {b.shape} vs {w.shape}")
        out += b.data[:, None]
        parents.append(b)
    out = np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))

    def backward(g):
        gx = gw = gb = None
        gflat = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, -1)
        if w.requires_grad:
            gw = (gflat @ cols.T).reshape(w.shape)
        if x.requires_grad:
            gcols = (wflat.T @ gflat).reshape(c, kh * kw, n, ho, wo)
            gxp = np.zeros((c, n, h + 2 * ph, wd + 2 * pw))
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + ho, j:j + wo] += gcols[:, i * kw + j]
            gx = np.ascontiguousarray(gxp[:, :, ph:ph + h, pw:pw + wd].transpose(1, 0, 2, 3))
        if b is not None and b.requires_grad:
            gb = gflat.sum(axis=1)
        return (gx, gw, gb) if b is not None else (gx, gw)

    return Tensor._node(out, parents, backward, "conv2d")


def conv1d(x, w, b=None, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation: x (N,C,L), w (O,C,k), b (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1d: shape mismatch {x.shape} vs {w.shape}")
    out = conv2d(reshape(x, x.shape + (1,)), reshape(w, w.shape + (1,)), b, (padding, 0))
    return reshape(out, out.shape[:3])


# -- shape ops --------------------------------------------------------------------------

def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inv),)

    return Tensor._node(x.data.transpose(axes), (x,), backward, "transpose")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._node(out, (x,), backward, "reshape")


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    out = x.data[index]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g) if _is_advanced(index) else gx.__setitem__(index, g)
        return (gx,)

    return Tensor._node(np.array(out, dtype=np.float64), (x,), backward, "slice")


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concatenate(tensors: Iterable, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concatenate: shape mismatch {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._node(out, tensors, backward, "concatenate")


# -- reductions ---------------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._node(np.asarray(x.data.sum(axis=axes, keepdims=keepdims)), (x,), backward, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    """Mean-pool over the given axes."""
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    if count == 0:
        raise ShapeError(f"mean: empty reduction over axes {axes} of {x.shape}")

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return Tensor._node(np.asarray(x.data.mean(axis=axes, keepdims=keepdims)), (x,), backward, "mean")


def l2norm(x, axis=-1, keepdims: bool = False, eps: float = 0.0) -> Tensor:
    """``sqrt(sum(x**2) + eps**2)``; a positive ``eps`` keeps the gradient finite at zero."""
    x = as_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True) + eps * eps)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * x.data / n,)

    out = n if keepdims else np.squeeze(n, axis=axis)
    return Tensor._node(np.asarray(out), (x,), backward, "l2norm")


# -- elementwise unary ----------------------------------------------------------------------

def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor._node(x.data * mask, (x,), backward, "relu")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor._node(out, (x,), backward, "sigmoid")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return Tensor._node(out, (x,), backward, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (g / x.data,)

    return Tensor._node(np.log(x.data), (x,), backward, "log")


def _check_softmax_axis(x: Tensor, axis: int, op: str) -> None:
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"{op}: empty axis {axis} in shape {x.shape}")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_softmax_axis(x, axis, "softmax")
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._node(out, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_softmax_axis(x, axis, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._node(out, (x,), backward, "log_softmax")
