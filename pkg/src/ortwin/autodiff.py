"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray and records the op that produced
it. Calling :meth:`Tensor.backward` on a scalar walks the recorded graph in
reverse topological order and accumulates gradients into every leaf tensor
(a tensor with no recorded parents) that has ``requires_grad`` set.

Semantics that tests rely on:

* Gradients accumulate across repeated ``backward`` calls; callers reset
  them explicitly (``zero_grad``).
* Every op validates shapes up front and checks its output for NaN/inf,
  so divergence surfaces at the op that produced it.
* Inside a ``no_grad()`` block no graph is recorded; forward values are
  identical either way.

The primitive set is fixed: matmul, add, mul, scalar arithmetic, relu,
gelu (tanh form), layer_norm, mean, concat, slice (basic indexing),
transpose, softmax, bce_with_logits. The model builds everything else out
of these.
"""

from __future__ import annotations

import contextlib

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class NumericsError(ArithmeticError):
    """An op produced NaN or inf."""


class GraphError(RuntimeError):
    """Backward called on something that is not a scalar root."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{op} produced non-finite values")


class Tensor:
    """Node in the compute graph; immutable data, mutable grad."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=DTYPE)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- graph bookkeeping -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        Gradients of interior nodes live only for the duration of the
        traversal; leaves keep (and accumulate) theirs until zero_grad.
        """
        if self.data.size != 1:
            raise GraphError(f"backward requires a scalar loss, got shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        flowing: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node._backward is not None:
                for parent, contrib in node._backward(g):
                    if not (parent.requires_grad or parent._parents):
                        continue
                    key = id(parent)
                    if key in flowing:
                        flowing[key] = flowing[key] + contrib
                    else:
                        flowing[key] = contrib
            elif node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad = node.grad + g

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), _as_tensor(-1.0)))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, _as_tensor(-1.0)))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not a primitive; multiply by a reciprocal")
        return mul(self, _as_tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, key):
        return slice_(self, key)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    track = _grad_enabled and any(p.requires_grad or p._parents for p in parents)
    out.requires_grad = track
    if track:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- primitives -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from e

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _node(data, (a, b), backward, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from e

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape)),
            (b, _unbroadcast(g * a.data, b.shape)),
        )

    return _node(data, (a, b), backward, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return ((a, _unbroadcast(ga, a.shape)), (b, _unbroadcast(gb, b.shape)))

    return _node(data, (a, b), backward, "matmul")


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def backward(g):
        return ((x, g * (x.data > 0.0)),)

    return _node(data, (x,), backward, "relu")


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = _as_tensor(x)
    u = _GELU_C * (x.data + _GELU_A * x.data**3)
    t = np.tanh(u)
    data = 0.5 * x.data * (1.0 + t)

    def backward(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x.data**2)
        local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * du
        return ((x, g * local),)

    return _node(data, (x,), backward, "gelu")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({n},), got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        # standard layer-norm backward, sums over the normalized axis
        dx = (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        ) * inv
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        return ((x, dx), (gain, dgain), (bias, dbias))

    return _node(data, (x, gain, bias), backward, "layer_norm")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = x.data.size
        axes = tuple(range(x.ndim))
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % x.ndim for a in axes)
        count = 1
        for a in axes:
            count *= x.shape[a]

    def backward(g):
        gg = np.asarray(g)
        if not keepdims:
            for a in sorted(axes):
                gg = np.expand_dims(gg, a)
        return ((x, np.broadcast_to(gg, x.shape) / count),)

    return _node(np.asarray(data), (x,), backward, "mean")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    ax = axis % data.ndim
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        sl = [slice(None)] * g.ndim
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl[ax] = slice(int(lo), int(hi))
            out.append((t, g[tuple(sl)]))
        return tuple(out)

    return _node(data, tuple(tensors), backward, "concat")


def slice_(x: Tensor, key) -> Tensor:
    """Basic indexing only (ints, slices, None, Ellipsis); it never copies cells twice,
    so backward is a plain scatter-add into a zero buffer."""
    x = _as_tensor(x)
    if isinstance(key, np.ndarray) or (
        isinstance(key, tuple) and any(isinstance(k, (np.ndarray, list)) for k in key)
    ):
        raise ShapeError("slice supports basic indexing only")
    data = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return ((x, gx),)

    return _node(np.asarray(data), (x,), backward, "slice")


def transpose(x: Tensor, axes=None) -> Tensor:
    x = _as_tensor(x)
    perm = tuple(range(x.ndim))[::-1] if axes is None else tuple(a % x.ndim for a in axes)
    data = np.transpose(x.data, perm)
    inverse = np.argsort(perm)

    def backward(g):
        return ((x, np.transpose(g, inverse)),)

    return _node(data, (x,), backward, "transpose")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((x, data * (g - dot)),)

    return _node(data, (x,), backward, "softmax")


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy, stable log-sum-exp form.

    max(z,0) - z*t + log(1 + exp(-|z|)) averaged over all elements.
    Targets are plain values in [0,1]; no gradient flows to them.
    """
    logits = _as_tensor(logits)
    t = np.asarray(targets, dtype=DTYPE)
    if t.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: target shape {t.shape} != logit shape {logits.shape}")
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        raise ValueError("bce_with_logits: targets must lie in [0, 1]")
    z = logits.data
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray(per.mean())
    n = max(per.size, 1)

    def backward(g):
        sig = 1.0 / (1.0 + np.exp(-z))
        return ((logits, (sig - t) * (np.asarray(g).reshape(()) / n)),)

    return _node(data, (logits,), backward, "bce_with_logits")


def sigmoid_np(z: np.ndarray) -> np.ndarray:
    """Plain-array stable sigmoid for inference paths (not a graph op)."""
    out = np.empty_like(z, dtype=DTYPE)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
