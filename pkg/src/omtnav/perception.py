"""Frozen feature extractors: class embeddings, scene encoder, object context grid."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .env.gridworld import Detection

GRID = 16


class EmbeddingTable:
    """Seeded unit-norm class vectors.

    Each class vector is ``normalize(g_cat + 0.5 * noise)`` where ``g_cat`` is
    shared by every class of the same category, so classes of one category
    are positively correlated.
    """

    def __init__(self, num_categories: int, classes_per_category: int, dim: int = 32, seed: int = 0):
        self.num_categories = num_categories
        self.classes_per_category = classes_per_category
        self.dim = dim
        self.seed = seed
        vecs = np.empty((num_categories * classes_per_category, dim))
        for cat in range(num_categories):
            g = rngmod.stream(seed, rngmod.EMBEDDING, 0, cat).standard_normal(dim)
            g /= np.linalg.norm(g)
            for k in range(classes_per_category):
                c = cat * classes_per_category + k
                noise = rngmod.stream(seed, rngmod.EMBEDDING, 1, c).standard_normal(dim) / math.sqrt(dim)
                v = g + 0.5 * noise
                vecs[c] = v / np.linalg.norm(v)
        vecs.setflags(write=False)
        self.vectors = vecs
        # pairwise cosines are reused for every context grid
        self.cosines = np.clip(vecs @ vecs.T, -1.0, 1.0)
        self.cosines.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.vectors.shape[0]

    def category_of(self, cls: int) -> int:
        return cls // self.classes_per_category

    def __getitem__(self, cls: int) -> np.ndarray:
        if not 0 <= cls < self.num_classes:
            raise KeyError(f"unknown class id {cls}")
        return self.vectors[cls]

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["class"] + [f"v{i}" for i in range(self.dim)])
            for c in range(self.num_classes):
                w.writerow([c] + [repr(float(v)) for v in self.vectors[c]])


def class_embedding(cls: int, table: EmbeddingTable) -> np.ndarray:
    return table[cls]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def grid_cell(det: Detection, raster_range_m: float) -> tuple[int, int]:
    col = min(max(int(math.floor((det.bearing + 45.0) / 90.0 * GRID)), 0), GRID - 1)
    row = min(max(int(math.floor(det.distance / raster_range_m * GRID)), 0), GRID - 1)
    return row, col


def build_context_grid(
    detections: Sequence[Detection], target: int, table: EmbeddingTable, raster_range_m: float = 2.5
) -> np.ndarray:
    """16x16 grid holding target/object cosine similarity at each projected detection.

    Columns follow bearing across the field of view, rows follow distance.
    When two detections land in one cell the nearer one is kept.
    """
    grid = np.zeros((GRID, GRID))
    taken = np.zeros((GRID, GRID), dtype=bool)
    for det in sorted(detections, key=lambda d: d.distance):
        r, c = grid_cell(det, raster_range_m)
        if taken[r, c]:
            continue
        taken[r, c] = True
        grid[r, c] = table.cosines[det.cls, target]
    return grid


class SceneEncoder:
    """Frozen random projection of a flattened one-hot raster."""

    def __init__(self, raster_shape: tuple[int, int, int], dim: int = 128, seed: int = 0):
        self.raster_shape = tuple(raster_shape)
        self.dim = dim
        n_in = int(np.prod(self.raster_shape))
        r = self.raster_shape[0] * self.raster_shape[1]
        w = rngmod.stream(seed, rngmod.SCENE_ENCODER).standard_normal((n_in, dim)) / math.sqrt(r)
        w.setflags(write=False)
        self.weight = w

    def __call__(self, raster: np.ndarray) -> np.ndarray:
        return encode_scene(raster, self)


def encode_scene(raster: np.ndarray, encoder: SceneEncoder) -> np.ndarray:
    if tuple(raster.shape) != encoder.raster_shape:
        raise ValueError(f"raster shape {raster.shape} does not match encoder {encoder.raster_shape}")
    return raster.reshape(-1).astype(np.float64) @ encoder.weight


class Perception:
    """Bundle of the frozen extractors used by agents."""

    def __init__(self, env_cfg, d_w: int = 32, d_v: int = 128, seed: int = 0):
        gen = env_cfg.gen
        self.table = EmbeddingTable(gen.num_categories, gen.classes_per_category, d_w, seed)
        self.encoder = SceneEncoder((env_cfg.raster_size, env_cfg.raster_size, env_cfg.channels), d_v, seed)
        self.raster_range_m = env_cfg.raster_range_m
        self._scene_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def scene(self, raster: np.ndarray) -> np.ndarray:
        # rasters are cached by the environment, so identity is a cheap key
        key = id(raster)
        hit = self._scene_cache.get(key)
        if hit is not None and hit[0] is raster:
            return hit[1]
        v = encode_scene(raster, self.encoder)
        if len(self._scene_cache) > 4096:
            self._scene_cache.clear()
        self._scene_cache[key] = (raster, v)
        return v

    def grid(self, detections: Iterable[Detection], target: int) -> np.ndarray:
        return build_context_grid(tuple(detections), target, self.table, self.raster_range_m)

    def target(self, cls: int) -> np.ndarray:
        return self.table[cls]
