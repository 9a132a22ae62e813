"""Discrete indoor navigation environment.

Agent kinematics, visibility, ground-truth detections and the shaped reward.
States are immutable; :meth:`GridWorld.step` returns a new state so a
``(state, action)`` pair always maps to the same successor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import rng as rngmod
from . import kernels
from .layout import CELL_M, GenConfig, GenerationError, Layout, PlacedObject, generate_layout

ACTIONS = (
    "MoveForward",
    "MoveBackward",
    "MoveRight",
    "MoveLeft",
    "RotateRight",
    "RotateLeft",
    "LookUp",
    "LookDown",
    "Done",
)
N_ACTIONS = len(ACTIONS)
DONE = 8
TILTS = (-30, 0, 30)

REWARD_SUCCESS = 5.0
REWARD_STEP = -0.01


class EpisodeOver(RuntimeError):
    pass


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    heading: int = 0  # degrees, multiple of 45
    tilt: int = 0  # degrees, one of -30, 0, 30

    @property
    def h(self) -> int:
        return (self.heading // 45) % 8

    @property
    def t(self) -> int:
        return TILTS.index(self.tilt)

    @classmethod
    def from_index(cls, x: int, y: int, h: int, t: int) -> "Pose":
        return cls(int(x), int(y), 45 * int(h), TILTS[int(t)])


@dataclass(frozen=True)
class Task:
    layout: Layout
    start: Pose
    target: int
    layout_seed: int = -1
    dstar: int | None = None


@dataclass(frozen=True)
class Detection:
    cls: int
    bearing: float  # degrees relative to heading, positive to the right
    distance: float  # metres
    height: int
    area: float  # apparent area fraction in [0, 1]


@dataclass(frozen=True)
class Observation:
    raster: np.ndarray  # [R, R, C] uint8 one-hot
    detections: tuple[Detection, ...]


@dataclass(frozen=True)
class EnvState:
    task: Task
    pose: Pose
    steps: int = 0
    done: bool = False
    success: bool = False
    max_sbbox: float = 0.0
    last_sbbox: float = 0.0


@dataclass(frozen=True)
class EnvConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    raster_size: int = 11
    kappa: float = 0.25
    max_steps: int = 300
    visibility_m: float = 1.5

    @property
    def num_classes(self) -> int:
        return self.gen.num_classes

    @property
    def channels(self) -> int:
        return self.num_classes + 3

    @property
    def raster_range_m(self) -> float:
        return (self.raster_size // 2) * CELL_M

    @property
    def visibility_r2(self) -> int:
        r = self.visibility_m / CELL_M
        return int(math.floor(r * r + 1e-9))


def compute_reward(success: bool, s_bbox: float, episode_max: float) -> tuple[float, float]:
    """Shaped reward: success, else a strictly new episode maximum of S_bbox, else a step cost."""
    if success:
        return REWARD_SUCCESS, episode_max
    if s_bbox > episode_max:
        return s_bbox, s_bbox
    return REWARD_STEP, episode_max


def apparent_area(size: float, distance_m: float, kappa: float) -> float:
    return min(1.0, (size / max(distance_m, 0.5)) ** 2 * kappa)


def move(walkable: np.ndarray, pose: Pose, action: int) -> Pose:
    h, t = pose.h, pose.t
    if action < 4:
        d = (h, h + 4, h + 2, h + 6)[action] % 8
        nx, ny = pose.x + kernels.DX[d], pose.y + kernels.DY[d]
        if 0 <= nx < walkable.shape[1] and 0 <= ny < walkable.shape[0] and walkable[ny, nx]:
            return replace(pose, x=nx, y=ny)
        return pose
    if action == 4:
        return replace(pose, heading=(pose.heading + 45) % 360)
    if action == 5:
        return replace(pose, heading=(pose.heading - 45) % 360)
    if action == 6:
        return replace(pose, tilt=min(pose.tilt + 30, 30))
    if action == 7:
        return replace(pose, tilt=max(pose.tilt - 30, -30))
    raise ValueError(f"not a movement action: {action}")


def is_visible(layout: Layout, pose: Pose, obj: PlacedObject, visibility_r2: int = 9) -> bool:
    dx, dy = obj.x - pose.x, obj.y - pose.y
    d2 = dx * dx + dy * dy
    if d2 == 0 or d2 > visibility_r2:
        return False
    if abs(kernels.bearing_deg(dx, dy, pose.h)) > kernels.FOV_HALF_DEG + kernels.ANGLE_TOL:
        return False
    if obj.height != pose.t:
        return False
    return kernels.line_clear(layout.cells, pose.x, pose.y, obj.x, obj.y)


def detect_objects(layout: Layout, pose: Pose, range_cells: int, kappa: float) -> tuple[Detection, ...]:
    """Ground-truth detections in view, nearest first.

    Uses the same field-of-view, line-of-sight and height gates as
    :func:`is_visible`, but the range is the raster extent rather than the
    success threshold.
    """
    found = []
    r2 = range_cells * range_cells
    for o in layout.objects:
        dx, dy = o.x - pose.x, o.y - pose.y
        d2 = dx * dx + dy * dy
        if d2 == 0 or d2 > r2 or o.height != pose.t:
            continue
        b = kernels.bearing_deg(dx, dy, pose.h)
        if abs(b) > kernels.FOV_HALF_DEG + kernels.ANGLE_TOL:
            continue
        if not kernels.line_clear(layout.cells, pose.x, pose.y, o.x, o.y):
            continue
        dist = math.sqrt(d2) * CELL_M
        found.append(Detection(o.cls, b, dist, o.height, apparent_area(o.size, dist, kappa)))
    found.sort(key=lambda d: (d.distance, d.bearing, d.cls))
    return tuple(found)


def goal_mask(layout: Layout, target: int, visibility_r2: int = 9) -> np.ndarray:
    """``[y, x, h, t]`` poses from which some object of class ``target`` is visible."""
    objs = np.array([(o.x, o.y, o.height) for o in layout.objects if o.cls == target], dtype=np.int32).reshape(-1, 3)
    return kernels.visible_mask(layout.cells, objs, visibility_r2)


def oracle_actions(layout: Layout, start: Pose, target: int, visibility_r2: int = 9) -> list[int]:
    """A shortest action sequence ending in Done, found by breadth-first search."""
    walk = layout.walkable
    if not walk[start.y, start.x]:
        raise TaskError(f"start cell ({start.x},{start.y}) is not free")
    path = kernels.bfs_path(walk, goal_mask(layout, target, visibility_r2), start.x, start.y, start.h, start.t)
    if path is None:
        raise TaskError(f"class {target} is not reachable from {start}")
    return list(path) + [DONE]


def shortest_path_steps(layout: Layout, start: Pose, target: int, visibility_r2: int = 9) -> int:
    return len(oracle_actions(layout, start, target, visibility_r2))


class GridWorld:
    """Environment instance; caches per-layout sensor results (pure functions of the pose)."""

    def __init__(self, cfg: EnvConfig | None = None, cache_layouts: int = 4):
        self.cfg = cfg or EnvConfig()
        self._cache_layouts = cache_layouts
        self._layout_cache: dict[int, Layout] = {}
        self._sensor: dict[int, tuple[Layout, dict, dict, dict]] = {}

    # -- layout / task helpers -------------------------------------------
    def layout(self, seed: int) -> Layout:
        lay = self._layout_cache.get(seed)
        if lay is None:
            lay = generate_layout(seed, self.cfg.gen)
            if len(self._layout_cache) >= 256:
                self._layout_cache.pop(next(iter(self._layout_cache)))
            self._layout_cache[seed] = lay
        return lay

    def generate_task(self, layout_seed: int, index: int, max_attempts: int = 100) -> Task:
        """Random start/target on a generated layout, rejected until a success pose is reachable."""
        lay = self.layout(layout_seed)
        rng = rngmod.stream(layout_seed, rngmod.TASK, index)
        classes = lay.classes_present()
        walk = np.argwhere(lay.walkable)
        for _ in range(max_attempts):
            target = classes[int(rng.integers(len(classes)))]
            y, x = walk[int(rng.integers(len(walk)))]
            start = Pose(int(x), int(y), 45 * int(rng.integers(8)), 0)
            try:
                dstar = shortest_path_steps(lay, start, target, self.cfg.visibility_r2)
            except TaskError:
                continue
            if dstar > self.cfg.max_steps:
                continue
            return Task(lay, start, target, layout_seed, dstar)
        raise GenerationError(f"no solvable task on layout {layout_seed}")

    def _sensors(self, layout: Layout):
        key = id(layout)
        entry = self._sensor.get(key)
        if entry is None or entry[0] is not layout:
            if len(self._sensor) >= self._cache_layouts:
                self._sensor.pop(next(iter(self._sensor)))
            entry = (layout, {}, {}, {})
            self._sensor[key] = entry
        return entry

    # -- sensing -----------------------------------------------------------
    def raster(self, layout: Layout, pose: Pose) -> np.ndarray:
        _, rasters, _, _ = self._sensors(layout)
        k = (pose.x, pose.y, pose.h)
        r = rasters.get(k)
        if r is None:
            r = kernels.egocentric_raster(
                layout.cells, layout.objcls, pose.x, pose.y, pose.h, self.cfg.raster_size, self.cfg.num_classes
            )
            r.setflags(write=False)
            rasters[k] = r
        return r

    def detections(self, layout: Layout, pose: Pose) -> tuple[Detection, ...]:
        _, _, dets, _ = self._sensors(layout)
        k = (pose.x, pose.y, pose.h, pose.t)
        d = dets.get(k)
        if d is None:
            d = detect_objects(layout, pose, self.cfg.raster_size // 2, self.cfg.kappa)
            dets[k] = d
        return d

    def target_visible(self, layout: Layout, pose: Pose, target: int) -> bool:
        _, _, _, goals = self._sensors(layout)
        g = goals.get(target)
        if g is None:
            g = goal_mask(layout, target, self.cfg.visibility_r2)
            goals[target] = g
        return bool(g[pose.y, pose.x, pose.h, pose.t])

    def observe(self, layout: Layout, pose: Pose) -> Observation:
        return Observation(self.raster(layout, pose), self.detections(layout, pose))

    def s_bbox(self, obs: Observation, target: int) -> float:
        return max((d.area for d in obs.detections if d.cls == target), default=0.0)

    # -- episode -----------------------------------------------------------
    def reset(self, task: Task) -> tuple[EnvState, Observation]:
        lay = task.layout
        p = task.start
        if not (0 <= p.x < lay.width and 0 <= p.y < lay.height) or not lay.walkable[p.y, p.x]:
            raise TaskError(f"start pose {p} is not on a free cell")
        pose = replace(p, tilt=0)
        obs = self.observe(lay, pose)
        return EnvState(task, pose, last_sbbox=self.s_bbox(obs, task.target)), obs

    def step(self, state: EnvState, action: int) -> tuple[EnvState, Observation, float, bool, dict]:
        if state.done:
            raise EpisodeOver("step() called after the episode ended")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"invalid action {action}")
        task = state.task
        lay = task.layout
        success = False
        if action == DONE:
            pose = state.pose
            success = self.target_visible(lay, pose, task.target)
            done = True
        else:
            pose = move(lay.walkable, state.pose, action)
            done = False
        obs = self.observe(lay, pose)
        sb = self.s_bbox(obs, task.target)
        reward, new_max = compute_reward(success, sb, state.max_sbbox)
        steps = state.steps + 1
        if not done and steps >= self.cfg.max_steps:
            done = True
        new = EnvState(task, pose, steps, done, success, new_max, sb)
        info = {"success": success, "s_bbox": sb, "blocked": action < 4 and pose == state.pose}
        return new, obs, reward, done, info
