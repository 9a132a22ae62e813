"""Frozen-policy rollouts, SR / SPL, top-down trajectory rendering and the ablation table."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import rng as rngmod
from .env.gridworld import DONE, N_ACTIONS, EnvConfig, GridWorld, Pose, Task
from .env.layout import OBSTACLE, WALL, Layout
from .numeric import checkpoint
from .perception import Perception
from .policy import ModelDims, OMTModel, act
from .training import Agent

REPORT_COLUMNS = ("variant", "seed", "SR", "SPL", "episodes")
TRAJECTORY_COLUMNS = ("t", "x", "y", "heading", "tilt", "action", "reward")


@dataclass
class EpisodeRecord:
    task: Task
    actions: list[int]
    poses: list[Pose]  # start pose first, one more entry than actions
    success: bool
    steps: int
    dstar: int
    rewards: list[float] = field(default_factory=list)


@dataclass
class TargetMetrics:
    episodes: int
    sr: float
    spl: float


@dataclass
class MetricsReport:
    episodes: int
    sr: float
    spl: float
    per_target: dict[int, TargetMetrics]
    mean_steps_success: float  # nan when nothing succeeded


# -- policies ----------------------------------------------------------------


class AgentPolicy:
    """A trained network queried through a fresh Object-Scene Memory each episode."""

    def __init__(self, model: OMTModel, params: dict[str, np.ndarray], perception: Perception):
        check_params(model, params)
        self.params = params
        self.agent = Agent(model, perception, next(iter(params.values())).dtype)

    def begin(self, task, obs) -> None:
        self.agent.begin(task, obs)

    def observe(self, obs) -> None:
        self.agent.observe(obs)

    def choose(self, rng, mode: str) -> int:
        return act(self.agent.output(self.params), rng, mode)


class RandomPolicy:
    """Uniform over all nine actions."""

    def begin(self, task, obs) -> None:
        pass

    def observe(self, obs) -> None:
        pass

    def choose(self, rng, mode: str) -> int:
        return int(rng.integers(N_ACTIONS))


class ScriptedPolicy:
    """Replays a fixed action list, then emits Done."""

    def __init__(self, actions: Sequence[int]):
        self.actions = list(actions)
        self.i = 0

    def begin(self, task, obs) -> None:
        self.i = 0

    def observe(self, obs) -> None:
        pass

    def choose(self, rng, mode: str) -> int:
        a = self.actions[self.i] if self.i < len(self.actions) else DONE
        self.i += 1
        return a


def check_params(model: OMTModel, params: dict[str, np.ndarray]) -> None:
    want = model.param_shapes()
    if set(want) != set(params):
        missing = sorted(set(want) - set(params))
        extra = sorted(set(params) - set(want))
        raise ValueError(f"checkpoint does not match variant {model.variant!r}: missing {missing[:3]}, unexpected {extra[:3]}")
    for name, shape in want.items():
        if tuple(params[name].shape) != tuple(shape):
            raise ValueError(f"checkpoint tensor {name} has shape {params[name].shape}, model expects {shape}")


def load_policy(path, model: OMTModel, perception: Perception, dtype=np.float32) -> AgentPolicy:
    params = {k: v.astype(dtype) for k, v in checkpoint.load(path).items()}
    return AgentPolicy(model, params, perception)


# -- rollouts ----------------------------------------------------------------


def run_episode(policy, task: Task, env: GridWorld, cap: int = 300, mode: str = "greedy", rng=None) -> EpisodeRecord:
    """Roll one episode until Done or ``cap`` actions."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    n_cls = env.cfg.num_classes
    if task.target >= n_cls or any(o.cls >= n_cls for o in task.layout.objects):
        raise ValueError("task uses object classes outside the environment configuration")
    state, obs = env.reset(task)
    policy.begin(task, obs)
    actions, poses, rewards = [], [state.pose], []
    while True:
        a = policy.choose(rng, mode)
        state, obs, r, done, _ = env.step(state, a)
        actions.append(a)
        poses.append(state.pose)
        rewards.append(r)
        if done or len(actions) >= cap:
            break
        policy.observe(obs)
    dstar = task.dstar if task.dstar is not None else -1
    return EpisodeRecord(task, actions, poses, bool(state.success), len(actions), dstar, rewards)


def evaluate(policy, tasks: Iterable[Task], env: GridWorld, cap: int = 300, mode: str = "greedy", seed: int = 0) -> list[EpisodeRecord]:
    out = []
    for i, task in enumerate(tasks):
        rng = rngmod.stream(seed, rngmod.EVAL, i)
        out.append(run_episode(policy, task, env, cap, mode, rng))
    return out


def compute_metrics(records: Sequence[EpisodeRecord]) -> MetricsReport:
    if not records:
        raise ValueError("no episodes to score")

    def score(recs):
        s = 0.0
        w = 0.0
        for r in recs:
            if r.success:
                s += 1.0
                w += min(1.0, r.dstar / r.steps)
        n = len(recs)
        return s / n, w / n

    sr, spl = score(records)
    per: dict[int, list] = {}
    for r in records:
        per.setdefault(r.task.target, []).append(r)
    per_target = {}
    for t in sorted(per):
        a, b = score(per[t])
        per_target[t] = TargetMetrics(len(per[t]), a, b)
    ok = [r.steps for r in records if r.success]
    mean_steps = float(np.mean(ok)) if ok else math.nan
    return MetricsReport(len(records), sr, spl, per_target, mean_steps)


def eval_tasks(env: GridWorld, layout_seeds: Sequence[int], n: int) -> list[Task]:
    """``n`` tasks spread round-robin over ``layout_seeds``."""
    seeds = list(layout_seeds)
    if not seeds:
        raise ValueError("no layouts to draw tasks from")
    return [env.generate_task(seeds[i % len(seeds)], i // len(seeds)) for i in range(n)]


# -- file formats ------------------------------------------------------------


def write_trajectory(record: EpisodeRecord, path) -> None:
    """One row per action with the pose it was taken from; a final row holds the end pose."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# target={record.task.target} layout_seed={record.task.layout_seed}\n")
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for t, (p, a, r) in enumerate(zip(record.poses, record.actions, record.rewards)):
            w.writerow([t, p.x, p.y, p.heading, p.tilt, a, repr(float(r))])
        p = record.poses[-1]
        w.writerow([len(record.actions), p.x, p.y, p.heading, p.tilt, "", ""])


@dataclass
class Trajectory:
    target: int
    poses: list[Pose]
    actions: list[int]
    rewards: list[float]

    @property
    def steps(self) -> int:
        return len(self.actions)


def read_trajectory(path) -> Trajectory:
    target = -1
    rows = []
    with open(path, encoding="utf-8") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    if k == "target":
                        target = int(v)
                continue
            lines.append(line)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or tuple(reader.fieldnames) != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: expected columns {','.join(TRAJECTORY_COLUMNS)}")
    rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    poses = [Pose(int(r["x"]), int(r["y"]), int(r["heading"]), int(r["tilt"])) for r in rows]
    acts = [int(r["action"]) for r in rows if r["action"] != ""]
    rews = [float(r["reward"]) for r in rows if r["reward"] != ""]
    if len(acts) != len(poses) - 1:
        raise ValueError(f"{path}: every row but the last needs an action")
    return Trajectory(target, poses, acts, rews)


def write_report(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([r["variant"], r["seed"], f"{r['SR']:.6f}", f"{r['SPL']:.6f}", r["episodes"]])


# -- rendering ---------------------------------------------------------------

COLORS = {
    "free": (255, 255, 255),
    "wall": (60, 60, 60),
    "obstacle": (140, 140, 140),
    "object": (170, 200, 230),
    "target": (255, 215, 0),
    "visit": (128, 0, 160),
    "start": (0, 0, 0),
    "header": (32, 32, 32),
    "text": (255, 255, 255),
}

# 3x5 digits, one string of 15 bits per glyph, row-major
_DIGITS = {
    "0": "111101101101111",
    "1": "010110010010111",
    "2": "111001111100111",
    "3": "111001111001111",
    "4": "101101111001001",
    "5": "111100111001111",
    "6": "111100111101111",
    "7": "111001001001001",
    "8": "111101111101111",
    "9": "111101111001111",
}


def visit_alpha(count: int) -> float:
    """Shading strength for a cell visited ``count`` times; strictly increasing, 0 for unvisited."""
    return 0.0 if count <= 0 else 1.0 - 0.6**count


def render_topdown(poses: Sequence[Pose], target: int, layout: Layout, steps: int, scale: int = 8, header: int = 9) -> np.ndarray:
    """Top-down RGB image ``[h*scale + header, w*scale, 3]`` of a trajectory."""
    if scale < 2:
        raise ValueError("scale must be at least 2")
    if header < 7:
        raise ValueError("header must be at least 7 pixels to hold the step count")
    H, W = layout.height, layout.width
    img = np.empty((H * scale + header, W * scale, 3), np.uint8)
    img[:header] = COLORS["header"]
    body = img[header:]
    base = np.empty((H, W, 3), np.float64)
    base[:] = COLORS["free"]
    base[layout.cells == WALL] = COLORS["wall"]
    base[layout.cells == OBSTACLE] = COLORS["obstacle"]
    for o in layout.objects:
        base[o.y, o.x] = COLORS["target"] if o.cls == target else COLORS["object"]

    counts = np.zeros((H, W), np.int64)
    for p in poses:
        counts[p.y, p.x] += 1
    visit = np.asarray(COLORS["visit"], np.float64)
    for y, x in zip(*np.nonzero(counts)):
        a = visit_alpha(int(counts[y, x]))
        base[y, x] = (1.0 - a) * base[y, x] + a * visit
    cells = np.rint(base).astype(np.uint8)
    body[:] = np.repeat(np.repeat(cells, scale, axis=0), scale, axis=1)

    # start marker: filled dot in the middle of the start cell
    if poses:
        s = poses[0]
        yy, xx = np.mgrid[0:scale, 0:scale]
        c = (scale - 1) / 2.0
        dot = (yy - c) ** 2 + (xx - c) ** 2 <= (scale / 4.0) ** 2
        body[s.y * scale : (s.y + 1) * scale, s.x * scale : (s.x + 1) * scale][dot] = COLORS["start"]

    _draw_number(img, str(int(steps)), 1, (header - 5) // 2)
    return img


def _draw_number(img: np.ndarray, text: str, x0: int, y0: int) -> None:
    x = x0
    for ch in text:
        bits = _DIGITS[ch]
        for i, b in enumerate(bits):
            if b == "1":
                yy, xx = y0 + i // 3, x + i % 3
                if xx < img.shape[1]:
                    img[yy, xx] = COLORS["text"]
        x += 4


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    # header: four whitespace separated tokens, then exactly one whitespace byte before the raster
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise ValueError("not a binary 8-bit PPM")
    w, h = int(tokens[1]), int(tokens[2])
    raster = data[pos + 1 : pos + 1 + w * h * 3]
    if len(raster) != w * h * 3:
        raise ValueError("truncated PPM raster")
    return np.frombuffer(raster, np.uint8).reshape(h, w, 3)


def save_ppm(img: np.ndarray, path) -> None:
    Path(path).write_bytes(ppm_bytes(img))


def render_record(record: EpisodeRecord, scale: int = 8, header: int = 9) -> np.ndarray:
    return render_topdown(record.poses, record.task.target, record.task.layout, record.steps, scale, header)


# -- ablation table ----------------------------------------------------------


def evaluate_params(
    variant: str,
    params: dict[str, np.ndarray],
    env_cfg: EnvConfig,
    dims: ModelDims,
    tasks: Sequence[Task],
    perception_seed: int = 0,
    cap: int = 300,
    mode: str = "greedy",
    seed: int = 0,
) -> MetricsReport:
    model = OMTModel(dims, variant)
    perception = Perception(env_cfg, dims.d_w, dims.d_v, perception_seed)
    policy = AgentPolicy(model, params, perception)
    return compute_metrics(evaluate(policy, tasks, GridWorld(env_cfg), cap, mode, seed))


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Median SR / SPL per variant, in first-seen order."""
    order: list[str] = []
    by: dict[str, list[dict]] = {}
    for r in rows:
        if r["variant"] not in by:
            order.append(r["variant"])
            by[r["variant"]] = []
        by[r["variant"]].append(r)
    return [
        {
            "variant": v,
            "seeds": len(by[v]),
            "SR": median([r["SR"] for r in by[v]]),
            "SPL": median([r["SPL"] for r in by[v]]),
        }
        for v in order
    ]


def run_ablation_suite(
    cfg,
    variants: Sequence[str],
    seeds: Sequence[int],
    out_dir,
    no_train: bool = False,
    tasks: Sequence[Task] | None = None,
    progress_every: float = 0.0,
) -> list[dict]:
    """Train (or load) every variant for every seed and evaluate each on the same held-out tasks.

    Returns one row per (variant, seed) and writes ``report.csv`` plus a
    median ``summary.csv`` into ``out_dir``.
    """
    from . import runs

    if not variants or not seeds:
        raise ValueError("need at least one variant and one seed")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = GridWorld(cfg.env)
    if tasks is None:
        lo, hi = cfg.eval.test_layouts
        tasks = eval_tasks(env, range(lo, hi), cfg.eval.episodes)
        runs.write_tasks(tasks, cfg.env, out / "tasks.txt")
    dtype = np.float32 if cfg.run.precision == 32 else np.float64
    rows = []
    for variant in variants:
        OMTModel(cfg.model, variant)  # reject unknown names before any training
    for variant in variants:
        for seed in seeds:
            run_dir = out / variant / f"seed{seed}"
            ckpt = run_dir / "checkpoint_final.omt"
            if ckpt.exists():
                params = {k: v.astype(dtype) for k, v in checkpoint.load(ckpt).items()}
            elif no_train:
                raise FileNotFoundError(f"no checkpoint for {variant} seed {seed} at {ckpt}")
            else:
                params = runs.train_job(cfg, seed, run_dir, variant, progress_every).params
            rep = evaluate_params(
                variant, params, cfg.env, cfg.model, tasks, cfg.train.perception_seed, cfg.eval.cap, cfg.eval.mode, cfg.eval.seed
            )
            rows.append({"variant": variant, "seed": seed, "SR": rep.sr, "SPL": rep.spl, "episodes": rep.episodes})
    write_report(rows, out / "report.csv")
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("variant", "seeds", "SR_median", "SPL_median"))
        for s in summarize(rows):
            w.writerow([s["variant"], s["seeds"], f"{s['SR']:.6f}", f"{s['SPL']:.6f}"])
    return rows
