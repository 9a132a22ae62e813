"""Procedural room layouts and their text format."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rng as rngmod

FREE, WALL, OBSTACLE = 0, 1, 2
HEIGHTS = ("low", "mid", "high")
GLYPHS = {FREE: ".", WALL: "#", OBSTACLE: "o"}
CELL_M = 0.5


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class PlacedObject:
    cls: int
    x: int
    y: int
    height: int  # index into HEIGHTS
    size: float  # in cell fractions, (0, 1]


@dataclass(frozen=True)
class GenConfig:
    width: int = 6
    height: int = 6
    num_categories: int = 1
    classes_per_category: int = 3
    n_objects: int = 3
    obstacle_density: float = 0.0
    # chance an object is drawn from a category other than the room's own
    cross_category: float = 0.0
    height_levels: tuple[int, ...] = (0, 1, 2)
    size_range: tuple[float, float] = (0.5, 1.0)
    max_attempts: int = 200

    @property
    def num_classes(self) -> int:
        return self.num_categories * self.classes_per_category

    def validate(self) -> None:
        if self.width < 5 or self.height < 5:
            raise GenerationError("layouts must be at least 5x5")
        if not 0.0 <= self.obstacle_density < 1.0:
            raise GenerationError("obstacle_density must be in [0, 1)")
        interior = (self.width - 2) * (self.height - 2)
        if self.n_objects < 1 or self.n_objects + 1 > interior:
            raise GenerationError(f"cannot place {self.n_objects} objects in {interior} interior cells")
        if self.num_categories < 1 or self.classes_per_category < 1:
            raise GenerationError("need at least one category and class")
        if not self.height_levels or any(h not in (0, 1, 2) for h in self.height_levels):
            raise GenerationError("height_levels must be a non-empty subset of {0, 1, 2}")
        lo, hi = self.size_range
        if not 0.0 < lo <= hi <= 1.0:
            raise GenerationError("size_range must satisfy 0 < lo <= hi <= 1")


@dataclass(frozen=True, eq=False)
class Layout:
    cells: np.ndarray  # [height, width] int8
    objects: tuple[PlacedObject, ...]
    category: int = 0
    _objcls: np.ndarray = field(default=None, repr=False)
    _walkable: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        oc = np.full(self.cells.shape, -1, dtype=np.int16)
        for o in self.objects:
            if self.cells[o.y, o.x] != FREE:
                raise GenerationError(f"object at ({o.x},{o.y}) is not on a free cell")
            if oc[o.y, o.x] >= 0:
                raise GenerationError(f"two objects share cell ({o.x},{o.y})")
            oc[o.y, o.x] = o.cls
        walk = (self.cells == FREE) & (oc < 0)
        self.cells.setflags(write=False)
        oc.setflags(write=False)
        walk.setflags(write=False)
        object.__setattr__(self, "_objcls", oc)
        object.__setattr__(self, "_walkable", walk)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def objcls(self) -> np.ndarray:
        return self._objcls

    @property
    def walkable(self) -> np.ndarray:
        return self._walkable

    def classes_present(self) -> list[int]:
        return sorted({o.cls for o in self.objects})

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Layout)
            and np.array_equal(self.cells, other.cells)
            and self.objects == other.objects
            and self.category == other.category
        )

    def dumps(self) -> str:
        lines = [f"OMTENV1 {self.width} {self.height}"]
        for row in self.cells:
            lines.append("".join(GLYPHS[int(c)] for c in row))
        lines.append(f"category {self.category}")
        for o in self.objects:
            lines.append(f"obj {o.cls} {o.x} {o.y} {HEIGHTS[o.height]} {o.size!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Layout":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if len(head) != 3 or head[0] != "OMTENV1":
            raise ValueError("not an OMTENV1 layout")
        w, h = int(head[1]), int(head[2])
        inv = {g: k for k, g in GLYPHS.items()}
        rows = lines[1 : 1 + h]
        if len(rows) != h or any(len(r) != w for r in rows):
            raise ValueError("layout grid does not match header dimensions")
        cells = np.array([[inv[ch] for ch in r] for r in rows], dtype=np.int8)
        category = 0
        objs = []
        for ln in lines[1 + h :]:
            parts = ln.split()
            if parts[0] == "category":
                category = int(parts[1])
            elif parts[0] == "obj":
                objs.append(PlacedObject(int(parts[1]), int(parts[2]), int(parts[3]), HEIGHTS.index(parts[4]), float(parts[5])))
            else:
                raise ValueError(f"unknown layout line: {ln!r}")
        return cls(cells, tuple(objs), category)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Layout":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def is_connected(walk: np.ndarray) -> bool:
    pts = np.argwhere(walk)
    if len(pts) == 0:
        return False
    H, W = walk.shape
    seen = np.zeros_like(walk)
    y0, x0 = pts[0]
    seen[y0, x0] = True
    q = deque([(y0, x0)])
    n = 1
    while q:
        y, x = q.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ny, nx = y + dy, x + dx
            if 0 <= ny < H and 0 <= nx < W and walk[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                n += 1
                q.append((ny, nx))
    return n == len(pts)


def generate_layout(seed: int, cfg: GenConfig) -> Layout:
    """Deterministic layout for ``(seed, cfg)``; rejection-samples until connected."""
    cfg.validate()
    rng = rngmod.stream(seed, rngmod.LAYOUT)
    W, H = cfg.width, cfg.height
    for _ in range(cfg.max_attempts):
        cells = np.full((H, W), FREE, dtype=np.int8)
        cells[0, :] = cells[-1, :] = WALL
        cells[:, 0] = cells[:, -1] = WALL
        if cfg.obstacle_density > 0:
            inner = rng.random((H - 2, W - 2)) < cfg.obstacle_density
            cells[1:-1, 1:-1][inner] = OBSTACLE
        free = np.argwhere(cells == FREE)
        if len(free) < cfg.n_objects + 1:
            continue
        category = int(rng.integers(cfg.num_categories))
        picks = rng.permutation(len(free))[: cfg.n_objects]
        objs = []
        for k in picks:
            y, x = free[k]
            cat = category
            if cfg.num_categories > 1 and rng.random() < cfg.cross_category:
                cat = int(rng.integers(cfg.num_categories))
            cls = cat * cfg.classes_per_category + int(rng.integers(cfg.classes_per_category))
            lvl = int(cfg.height_levels[int(rng.integers(len(cfg.height_levels)))])
            size = float(rng.uniform(*cfg.size_range))
            objs.append(PlacedObject(cls, int(x), int(y), lvl, size))
        layout = Layout(cells, tuple(objs), category)
        if is_connected(layout.walkable):
            return layout
    raise GenerationError(f"no connected layout after {cfg.max_attempts} attempts (seed {seed})")
