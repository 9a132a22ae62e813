"""Dense tensors with an optional reverse-mode recording tape.

A :class:`Tensor` is a thin immutable wrapper around a numpy array.  When any
input of a primitive lives on a :class:`Tape`, the primitive records itself
(forward function, backward function, input node ids) so that
:func:`backward` can later produce exact gradients and :meth:`Tape.replay`
can recompute every node from fresh parameter values.

Tensors that are not on a tape behave as plain eager values, which is the
path used for action selection during rollouts.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested primitive."""


class Tensor:
    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: "Tape | None" = None, node: int = -1):
        self.data = data if type(data) is np.ndarray else np.asarray(data)
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        where = f"node={self.node}" if self.tape is not None else "const"
        return f"Tensor(shape={self.shape}, {where})"

    # operator sugar; all of these route through the recorded primitives
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


class Record(NamedTuple):
    name: str
    forward: Callable[..., np.ndarray]
    backward: Callable[..., tuple]
    inputs: tuple[int, ...]  # node ids, -1 for constants
    consts: tuple  # arrays for constant inputs (None where the input is a node)
    out: int


class Tape:
    """Ordered record of primitive applications plus a named parameter registry."""

    def __init__(self, check_finite: bool = True):
        self.records: list[Record] = []
        self.values: list[np.ndarray] = []
        self.params: dict[str, int] = {}
        self.check_finite = check_finite

    def __len__(self) -> int:
        return len(self.values)

    def param(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        node = self._new_node(np.asarray(value))
        self.params[name] = node
        return Tensor(self.values[node], self, node)

    def _new_node(self, value: np.ndarray) -> int:
        self.values.append(value)
        return len(self.values) - 1

    def record(self, name, forward, backward, inputs: Sequence[Tensor], out: np.ndarray) -> Tensor:
        if self.check_finite and not np.isfinite(out).all():
            raise NonFiniteError(f"{name} produced non-finite values")
        values = self.values
        values.append(out)
        node = len(values) - 1
        ids = tuple([t.node if t.tape is self else -1 for t in inputs])
        consts = tuple([None if t.tape is self else t.data for t in inputs])
        self.records.append(Record(name, forward, backward, ids, consts, node))
        return Tensor(out, self, node)

    def replay(self, params: dict[str, np.ndarray] | None = None) -> list[np.ndarray]:
        """Recompute every node, optionally substituting parameter values."""
        values = list(self.values)
        if params:
            for name, value in params.items():
                values[self.params[name]] = np.asarray(value)
        for rec in self.records:
            args = [values[i] if i >= 0 else c for i, c in zip(rec.inputs, rec.consts)]
            values[rec.out] = rec.forward(*args)
        return values


def apply(name: str, forward, backward, *inputs: Tensor) -> Tensor:
    """Run ``forward`` on the input arrays, recording when any input is taped.

    ``backward(g, out, *arrays)`` must return one gradient (or None) per input.
    """
    if len(inputs) == 1:
        t = inputs[0]
        out = forward(t.data)
        tape = t.tape
    else:
        out = forward(*[t.data for t in inputs])
        tape = None
        for t in inputs:
            if t.tape is not None:
                tape = t.tape
                break
    if tape is None:
        return Tensor(out)
    return tape.record(name, forward, backward, inputs, out)


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar ``loss`` for every registered parameter.

    Parameters that do not influence the loss receive zero gradients.
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if loss.tape is not tape:
        raise ValueError("loss is not recorded on this tape")
    grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
    values = tape.values
    for rec in reversed(tape.records):
        g = grads.pop(rec.out, None)
        if g is None:
            continue
        if not any(i >= 0 for i in rec.inputs):
            continue
        args = [values[i] if i >= 0 else c for i, c in zip(rec.inputs, rec.consts)]
        in_grads = rec.backward(g, values[rec.out], *args)
        for i, gi in zip(rec.inputs, in_grads):
            if i < 0 or gi is None:
                continue
            if i in grads:
                grads[i] = grads[i] + gi
            else:
                grads[i] = gi
    out = {}
    for name, node in tape.params.items():
        g = grads.get(node)
        out[name] = np.zeros_like(values[node]) if g is None else g
    return out
