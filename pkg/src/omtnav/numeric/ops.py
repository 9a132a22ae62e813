"""Differentiable primitives.

Broadcasting is deliberately limited: binary elementwise ops need equal shapes,
and the only implicit expansion is the row-wise bias in :func:`add_bias`.
Anything else goes through an explicit :func:`reshape` / :func:`transpose`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, apply


def const(x, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype))


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


def _add_f(a, b):
    return a + b


def _add_b(g, out, a, b):
    return g, g


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return apply("add", _add_f, _add_b, a, b)


def _sub_f(a, b):
    return a - b


def _sub_b(g, out, a, b):
    return g, -g


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return apply("sub", _sub_f, _sub_b, a, b)


def _mul_f(a, b):
    return a * b


def _mul_b(g, out, a, b):
    return g * b, g * a


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return apply("mul", _mul_f, _mul_b, a, b)


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)
    return apply("scale", lambda a: a * c, lambda g, out, a: (g * c,), x)


def _bias_f(x, b):
    return x + b


def _bias_b(g, out, x, b):
    return g, g.reshape(-1, b.shape[0]).sum(axis=0)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x[..., d] + b[d]``, the single broadcasting primitive."""
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_bias: bias {b.shape} does not match rows of {x.shape}")
    return apply("add_bias", _bias_f, _bias_b, x, b)


def _matmul_f(a, b):
    return a @ b


def _matmul_b(g, out, a, b):
    return g @ b.T, a.T @ g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims {a.shape} x {b.shape}")
    return apply("matmul", _matmul_f, _matmul_b, a, b)


def _bmm_b(g, out, a, b):
    return g @ b.transpose(0, 2, 1), a.transpose(0, 2, 1) @ g


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product ``[n, m, k] x [n, k, p] -> [n, m, p]``."""
    if a.data.ndim != 3 or b.data.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm: incompatible shapes {a.shape} and {b.shape}")
    return apply("bmm", _matmul_f, _bmm_b, a, b)


def _linear_f(x, w, b):
    y = x @ w
    y += b
    return y


def _linear_b(g, out, x, w, b):
    return g @ w.T, x.T @ g, g.sum(axis=0)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` on row vectors; fused matmul and row-wise bias."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear: incompatible shapes x{x.shape} w{w.shape} b{b.shape}")
    return apply("linear", _linear_f, _linear_b, x, w, b)


def split_heads(x: Tensor, batch: int, heads: int, keys_last: bool = False) -> Tensor:
    """``[batch*n, heads*dk] -> [batch*heads, n, dk]`` (or ``[batch*heads, dk, n]``)."""
    rows, d = x.shape
    n, dk = rows // batch, d // heads
    if n * batch != rows or dk * heads != d:
        raise ShapeError(f"split_heads: {x.shape} does not split into {batch} x {heads}")
    perm = (0, 2, 3, 1) if keys_last else (0, 2, 1, 3)
    inv = tuple(np.argsort(perm))
    mid = (batch, heads, dk, n) if keys_last else (batch, heads, n, dk)

    def fwd(a):
        return np.ascontiguousarray(a.reshape(batch, n, heads, dk).transpose(perm)).reshape(batch * heads, *mid[2:])

    def bwd(g, out, a):
        return (g.reshape(mid).transpose(inv).reshape(rows, d),)

    return apply("split_heads", fwd, bwd, x)


def merge_heads(x: Tensor, batch: int) -> Tensor:
    """Inverse of :func:`split_heads`: ``[batch*heads, n, dk] -> [batch*n, heads*dk]``."""
    bh, n, dk = x.shape
    heads = bh // batch
    if heads * batch != bh:
        raise ShapeError(f"merge_heads: {x.shape} is not a multiple of batch {batch}")

    def fwd(a):
        return np.ascontiguousarray(a.reshape(batch, heads, n, dk).transpose(0, 2, 1, 3)).reshape(batch * n, heads * dk)

    def bwd(g, out, a):
        return (g.reshape(batch, n, heads, dk).transpose(0, 2, 1, 3).reshape(bh, n, dk),)

    return apply("merge_heads", fwd, bwd, x)


def _relu_f(x):
    return np.maximum(x, 0)


def _relu_b(g, out, x):
    return (g * (x > 0),)


def relu(x: Tensor) -> Tensor:
    return apply("relu", _relu_f, _relu_b, x)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    src = x.shape
    return apply("reshape", lambda a: a.reshape(shape), lambda g, out, a: (g.reshape(src),), x)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return apply(
        "transpose",
        lambda a: np.ascontiguousarray(a.transpose(axes)),
        lambda g, out, a: (g.transpose(inv),),
        x,
    )


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]

    def fwd(*arrays):
        return np.concatenate(arrays, axis=axis)

    def bwd(g, out, *arrays):
        return tuple(np.split(g, cuts, axis=axis))

    return apply("concat", fwd, bwd, *xs)


def where_mask(x: Tensor, keep: np.ndarray) -> Tensor:
    """Zero out entries where ``keep`` is false (exactly, no arithmetic on them)."""
    keep = np.broadcast_to(np.asarray(keep, dtype=bool), x.shape)
    zero = x.data.dtype.type(0)
    return apply(
        "where_mask",
        lambda a: np.where(keep, a, zero),
        lambda g, out, a: (np.where(keep, g, zero),),
        x,
    )


def total(x: Tensor) -> Tensor:
    shape = x.shape
    return apply(
        "sum",
        lambda a: np.asarray(a.sum(), dtype=a.dtype).reshape(()),
        lambda g, out, a: (np.full(shape, g, dtype=a.dtype),),
        x,
    )


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """``x[i, index[i]]`` for a 2-D ``x``."""
    index = np.asarray(index, dtype=np.intp)
    rows = np.arange(x.shape[0])

    def bwd(g, out, a):
        ga = np.zeros_like(a)
        ga[rows, index] = g
        return (ga,)

    return apply("pick", lambda a: a[rows, index], bwd, x)


def column(x: Tensor, j: int) -> Tensor:
    """Column ``j`` of a 2-D tensor as a vector."""

    def bwd(g, out, a):
        ga = np.zeros_like(a)
        ga[:, j] = g
        return (ga,)

    return apply("column", lambda a: a[:, j].copy(), bwd, x)


def _log_softmax_f(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _log_softmax_b(g, out, x):
    return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)


def log_softmax(x: Tensor) -> Tensor:
    return apply("log_softmax", _log_softmax_f, _log_softmax_b, x)


def _softmax_f(x):
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _softmax_b(g, out, x):
    return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)


def softmax(x: Tensor) -> Tensor:
    return apply("softmax", _softmax_f, _softmax_b, x)


def masked_softmax(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to ``mask``; masked entries are exactly 0.

    ``mask`` must broadcast to ``scores``.  A row with no surviving column is
    an error rather than a NaN.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    if not mask.any(axis=-1).all():
        raise ValueError("masked_softmax: a row has every column masked")
    zero = scores.data.dtype.type(0)
    ninf = scores.data.dtype.type(-np.inf)

    def fwd(x):
        z = np.where(mask, x, ninf)
        z = np.exp(z - z.max(axis=-1, keepdims=True))
        z = np.where(mask, z, zero)
        return z / z.sum(axis=-1, keepdims=True)

    return apply("masked_softmax", fwd, _softmax_b, scores)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},)")

    inv_d = 1.0 / d

    def normalise(a):
        c = a - a.sum(axis=-1, keepdims=True) * a.dtype.type(inv_d)
        var = (c * c).sum(axis=-1, keepdims=True) * a.dtype.type(inv_d)
        return c * (a.dtype.type(1.0) / np.sqrt(var + a.dtype.type(eps)))

    def fwd(a, gm, bt):
        return normalise(a) * gm + bt

    def bwd(g, out, a, gm, bt):
        xhat = normalise(a)
        c = a - a.sum(axis=-1, keepdims=True) * a.dtype.type(inv_d)
        inv = a.dtype.type(1.0) / np.sqrt((c * c).sum(axis=-1, keepdims=True) * a.dtype.type(inv_d) + a.dtype.type(eps))
        flat_g = g.reshape(-1, d)
        g_gain = (flat_g * xhat.reshape(-1, d)).sum(axis=0)
        g_bias = flat_g.sum(axis=0)
        gx = g * gm
        k = a.dtype.type(inv_d)
        ga = inv * (gx - gx.sum(axis=-1, keepdims=True) * k - xhat * ((gx * xhat).sum(axis=-1, keepdims=True) * k))
        return ga, g_gain, g_bias

    return apply("layer_norm", fwd, bwd, x, gain, bias)
