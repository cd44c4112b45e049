"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation the seq2seq model needs lives here: broadcasting
arithmetic, batched matmul, exact-erf GELU, softmax with a fused masked
cross-entropy, layer norm, an embedding gather, and a multi-head
attention composite. The tape is implicit: each non-leaf tensor records
its parents and a backward closure, and nodes carry a monotonically
increasing creation id, so walking the ancestors of a loss in descending
id order is exactly the reverse of append order. Gradients accumulate
additively, so a tensor feeding several consumers receives the sum of
all partials.

All computation is float64 and deterministic: identical inputs produce
bit-identical outputs.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "no_grad",
    "backward",
    "add",
    "sub",
    "mul",
    "matmul",
    "swapaxes",
    "reshape",
    "tsum",
    "tmean",
    "gelu",
    "softmax",
    "softmax_cross_entropy",
    "layer_norm",
    "embedding",
    "attention",
]

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_MASK_NEG = -1e30  # additive attention mask; exp underflows to exactly 0

_ids = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


@contextmanager
def no_grad():
    """Disable tape recording inside the block (for evaluation paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A float64 ndarray plus the autodiff bookkeeping.

    Treat ``data`` as immutable after construction; reshape and friends
    return new tensors. ``grad`` is lazily allocated by backward().
    """

    __slots__ = ("data", "requires_grad", "grad", "_op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._op = "leaf"
        self._parents: tuple = ()
        self._backward: Optional[Callable[[], None]] = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the op set")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, parents: Sequence[Tensor], op: str, backward_fn: Callable[[], None]) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._op = op
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast during the forward op."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/dp into .grad of every requires_grad ancestor.

    The loss must be scalar. Visits each recorded node exactly once, in
    reverse creation order (a valid reverse topological order because
    every node is created after its inputs).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        if t._backward is not None:
            nodes.append(t)
            stack.extend(t._parents)
    nodes.sort(key=lambda t: t._id, reverse=True)
    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)
    for node in nodes:
        node._backward()


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def bw():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(out.grad, b.shape))

    return _record(out, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def bw():
        _accum(a, _unbroadcast(out.grad, a.shape))
        _accum(b, _unbroadcast(-out.grad, b.shape))

    return _record(out, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def bw():
        _accum(a, _unbroadcast(out.grad * b.data, a.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.shape))

    return _record(out, (a, b), "mul", bw)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching: (..., m, k) @ (..., k, n).

    grad wrt a is g @ b^T, wrt b is a^T @ g, summed over broadcast batch
    dims.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def bw():
        g = out.grad
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _record(out, (a, b), "matmul", bw)


def swapaxes(x: Tensor, ax0: int, ax1: int) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.swapaxes(x.data, ax0, ax1))

    def bw():
        _accum(x, np.swapaxes(out.grad, ax0, ax1))

    return _record(out, (x,), "swapaxes", bw)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size and -1 not in shape:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    out = Tensor(x.data.reshape(shape))

    def bw():
        _accum(x, out.grad.reshape(x.shape))

    return _record(out, (x,), "reshape", bw)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bw():
        g = out.grad
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            for ax in sorted(a % x.ndim for a in axes):
                g = np.expand_dims(g, ax)
        _accum(x, np.broadcast_to(g, x.shape).copy())

    return _record(out, (x,), "sum", bw)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# nonlinearities and normalization


def gelu(x: Tensor) -> Tensor:
    """x * Phi(x) with the exact erf form of the standard normal CDF.

    d/dx = Phi(x) + x * phi(x).
    """
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT1_2))
    out = Tensor(x.data * cdf)

    def bw():
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        _accum(x, out.grad * (cdf + x.data * pdf))

    return _record(out, (x,), "gelu", bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along one axis; rows sum to 1."""
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bw():
        g = out.grad
        _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _record(out, (x,), "softmax", bw)


def softmax_cross_entropy(logits: Tensor, targets, mask) -> Tensor:
    """Mean of -log softmax(logits)[target] over the masked positions.

    ``logits`` is [n, v]; ``targets`` are class indices of length n;
    ``mask`` marks which positions contribute to the mean. Stabilized by
    max subtraction. Raises on an all-masked input or an out-of-range
    target.
    """
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross entropy expects [n, v] logits, got {logits.shape}")
    n, v = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    mask_arr = np.asarray(mask, dtype=bool)
    if targets.shape != (n,) or mask_arr.shape != (n,):
        raise ShapeError(f"targets/mask must have length {n}")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= v:
        raise IndexError(f"target index out of range for vocab size {v}")
    count = int(mask_arr.sum())
    if count == 0:
        raise ValueError("empty loss: every position is masked")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    nll = -logp[np.arange(n), targets]
    out = Tensor((nll * mask_arr).sum() / count)

    def bw():
        p = np.exp(logp)
        p[np.arange(n), targets] -= 1.0
        p *= (mask_arr / count)[:, None]
        _accum(logits, p * out.grad)

    return _record(out, (logits,), "softmax_cross_entropy", bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over the last axis, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)

    def bw():
        g = out.grad
        red = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=red))
        _accum(bias, g.sum(axis=red))
        if x.requires_grad:
            dxhat = g * gain.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            _accum(x, inv * term)

    return _record(out, (x, gain, bias), "layer_norm", bw)


def embedding(table: Tensor, ids) -> Tensor:
    """Row gather table[ids]; backward scatter-adds into the table."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range for table of {table.shape[0]} rows")
    out = Tensor(table.data[ids])

    def bw():
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.ravel(), out.grad.reshape(-1, table.shape[1]))

    return _record(out, (table,), "embedding", bw)


# ---------------------------------------------------------------------------
# attention


def attention(q: Tensor, k: Tensor, v: Tensor, causal: bool = False, n_heads: int = 1,
              key_mask=None) -> Tensor:
    """Multi-head scaled dot-product attention.

    q is [n, d] or [b, n, d]; k and v share a key length m. causal=True
    lets position i attend to keys j <= i (requires n == m). key_mask is
    an optional boolean [m] or [b, m] marking attendable keys (padding
    excluded). Built from primitive ops, so gradients come for free.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    squeeze = q.ndim == 2
    if squeeze:
        q = reshape(q, (1,) + q.shape)
        k = reshape(k, (1,) + k.shape)
        v = reshape(v, (1,) + v.shape)
    b, n, d = q.shape
    m = k.shape[1]
    if d % n_heads != 0:
        raise ShapeError(f"d_model {d} is not divisible by n_heads {n_heads}")
    if causal and n != m:
        raise ShapeError("causal attention requires equal query and key lengths")
    dh = d // n_heads

    def split(t, length):
        return swapaxes(reshape(t, (b, length, n_heads, dh)), 1, 2)  # [b, h, len, dh]

    qh, kh, vh = split(q, n), split(k, m), split(v, m)
    scores = mul(matmul(qh, swapaxes(kh, -1, -2)), 1.0 / np.sqrt(dh))  # [b, h, n, m]

    bias = np.zeros((b, 1, n, m))
    if causal:
        bias += np.where(np.triu(np.ones((n, m), dtype=bool), k=1), _MASK_NEG, 0.0)
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)
        if km.ndim == 1:
            km = np.broadcast_to(km, (b, m))
        bias = bias + np.where(km, 0.0, _MASK_NEG)[:, None, None, :]
    if causal or key_mask is not None:
        scores = add(scores, Tensor(bias))

    mixed = matmul(softmax(scores, axis=-1), vh)  # [b, h, n, dh]
    out = reshape(swapaxes(mixed, 1, 2), (b, n, d))
    if squeeze:
        out = reshape(out, (n, d))
    return out
