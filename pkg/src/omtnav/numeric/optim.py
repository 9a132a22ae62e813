from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RmspropState:
    decay: float = 0.99
    eps: float = 1e-8
    acc: dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: RmspropState,
    lr: float,
) -> dict[str, np.ndarray]:
    """One RMSprop update; returns new parameter arrays (inputs are not mutated).

    Accumulators in ``state`` are replaced by fresh arrays as well, so a
    concurrent reader never sees a half-written tensor.
    """
    rho, eps = state.decay, state.eps
    out = dict(params)
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        acc = state.acc.get(name)
        if acc is None:
            acc = np.zeros_like(p)
        acc = rho * acc + (1.0 - rho) * (g * g)
        state.acc[name] = acc.astype(p.dtype, copy=False)
        out[name] = (p - lr * g / (np.sqrt(acc) + eps)).astype(p.dtype, copy=False)
    return out


def rmsprop_flat(theta: np.ndarray, g: np.ndarray, acc: np.ndarray, decay: float, eps: float, lr: float) -> np.ndarray:
    """:func:`rmsprop_step` on one flat vector; ``acc`` and ``g`` are updated in place.

    Returns a new parameter vector, ``theta`` itself is left untouched.
    """
    t = theta.dtype.type
    acc *= t(decay)
    sq = np.multiply(g, g)
    sq *= t(1.0 - decay)
    acc += sq
    np.sqrt(acc, out=sq)
    sq += t(eps)
    np.divide(g, sq, out=g)
    g *= t(lr)
    return theta - g


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    k = max_norm / norm
    return {name: g * g.dtype.type(k) for name, g in grads.items()}, norm


class ParamLayout:
    """Fixed name/shape order for packing a parameter dict into one flat vector."""

    def __init__(self, shapes: dict[str, tuple[int, ...]]):
        self.names = list(shapes)
        self.shapes = [tuple(shapes[n]) for n in self.names]
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.size = int(self.offsets[-1])

    def flatten(self, params: dict[str, np.ndarray], dtype=None) -> np.ndarray:
        return np.concatenate([np.asarray(params[n], dtype=dtype).ravel() for n in self.names])

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        """Read-only views into ``flat``."""
        out = {}
        for n, s, a, b in zip(self.names, self.shapes, self.offsets[:-1], self.offsets[1:]):
            v = flat[a:b].reshape(s)
            v.flags.writeable = False
            out[n] = v
        return out
