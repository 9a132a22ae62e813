"""Object-Scene Memory: ring buffers of scene features and context grids, fusion, temporal codes."""

from __future__ import annotations

import numpy as np

from .numeric import ops
from .numeric.tensor import Tensor

GRID_CELLS = 256


class ObjectSceneMemory:
    """Capacity-``T`` ring buffer over (scene feature, flattened context grid) pairs.

    :meth:`read` returns slots ordered oldest to newest with the newest frame
    always in the last position; empty slots come first and are flagged
    false in the mask.
    """

    def __init__(self, capacity: int, scene_dim: int, grid_cells: int = GRID_CELLS, dtype=np.float64):
        if capacity < 1:
            raise ValueError("memory capacity must be positive")
        self.capacity = capacity
        self.scene_dim = scene_dim
        self.grid_cells = grid_cells
        self.dtype = np.dtype(dtype)
        self.scenes = np.zeros((capacity, scene_dim), dtype=self.dtype)
        self.grids = np.zeros((capacity, grid_cells), dtype=self.dtype)
        self.pushes = 0
        self.cursor = 0

    @property
    def occupancy(self) -> int:
        return min(self.pushes, self.capacity)

    def clear(self) -> None:
        self.scenes[:] = 0
        self.grids[:] = 0
        self.pushes = 0
        self.cursor = 0

    def push(self, scene: np.ndarray, grid: np.ndarray) -> None:
        scene = np.asarray(scene)
        grid = np.asarray(grid).reshape(-1)
        if scene.shape != (self.scene_dim,):
            raise ValueError(f"scene feature has shape {scene.shape}, expected ({self.scene_dim},)")
        if grid.shape != (self.grid_cells,):
            raise ValueError(f"context grid has {grid.size} cells, expected {self.grid_cells}")
        self.scenes[self.cursor] = scene
        self.grids[self.cursor] = grid
        self.cursor = (self.cursor + 1) % self.capacity
        self.pushes += 1

    def read(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(scenes [T, d_v], grids [T, 256], mask [T])`` oldest first, newest last."""
        T = self.capacity
        order = (self.cursor + np.arange(T)) % T
        mask = np.arange(T) >= T - self.occupancy
        return self.scenes[order], self.grids[order], mask


def temporal_code(T: int, d: int, denominator: int | None = None) -> np.ndarray:
    """Additive sinusoidal code for slot positions ``0..T-1``.

    Even dims get ``sin(pos / 10000**(2i/D))`` and odd dims the matching cosine,
    where ``D`` is the memory size unless ``denominator`` overrides it.
    """
    if d % 2:
        raise ValueError(f"temporal encoding needs an even feature size, got {d}")
    D = T if denominator is None else denominator
    pos = np.arange(T, dtype=np.float64)[:, None]
    i = np.arange(d // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / D)
    code = np.empty((T, d))
    code[:, 0::2] = np.sin(angle)
    code[:, 1::2] = np.cos(angle)
    return code


def temporal_encode(M: np.ndarray, T: int, denominator: int | None = None) -> np.ndarray:
    M = np.asarray(M)
    if M.shape[0] != T:
        raise ValueError(f"memory has {M.shape[0]} slots, expected {T}")
    return M + temporal_code(T, M.shape[1], denominator).astype(M.dtype, copy=False)


def soft_time_code(T: int) -> np.ndarray:
    """``exp(-pos / T)`` per slot; the non-sinusoidal ordering signal of one ablation."""
    return np.exp(-np.arange(T, dtype=np.float64) / T)


def fuse_all(
    P: dict[str, Tensor],
    scenes: np.ndarray | Tensor | None,
    grids: np.ndarray | Tensor | None,
    mask: np.ndarray,
) -> Tensor:
    """Fused slot features ``f_m(f_v(v), f_o(o))`` for every slot of a batch.

    ``scenes``/``grids`` are ``[B, T, .]``; either may be None when the
    variant leaves that stream out of memory.  Output is ``[B*T, d_m]`` with
    masked slots set to exact zeros.
    """
    streams = []
    B, T = mask.shape
    if scenes is not None:
        v = scenes if isinstance(scenes, Tensor) else Tensor(scenes)
        v = ops.reshape(v, (B * T, v.shape[-1]))
        streams.append(ops.relu(ops.linear(v, P["fuse.v.W"], P["fuse.v.b"])))
    if grids is not None:
        o = grids if isinstance(grids, Tensor) else Tensor(grids)
        o = ops.reshape(o, (B * T, o.shape[-1]))
        streams.append(ops.relu(ops.linear(o, P["fuse.o.W"], P["fuse.o.b"])))
    h = streams[0] if len(streams) == 1 else ops.concat(streams, axis=-1)
    m = ops.linear(h, P["fuse.m.W"], P["fuse.m.b"])
    return ops.where_mask(m, mask.reshape(B * T, 1))
