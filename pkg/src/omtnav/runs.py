"""On-disk artifacts: task files, ``run.meta`` manifests and training jobs."""

from __future__ import annotations

import hashlib
import platform
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import config as configmod
from .config import RunConfig
from .env import kernels
from .env.gridworld import EnvConfig, GridWorld, Pose, Task
from .numeric import checkpoint
from .training import TrainResult, train_run

TASK_HEADER = "# layout_seed x y heading target dstar"


def env_digest(env_cfg: EnvConfig) -> str:
    """Hash of the env.* settings; tasks are only meaningful under the same ones."""
    text = "\n".join(line for line in configmod.serialize(RunConfig(env=env_cfg)).splitlines() if line.startswith("env."))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def write_tasks(tasks: Sequence[Task], env_cfg: EnvConfig, path) -> None:
    lines = [f"# omtnav tasks env={env_digest(env_cfg)}", TASK_HEADER]
    for t in tasks:
        if t.dstar is None or t.layout_seed < 0:
            raise ValueError("tasks must come from generated layouts with a cached d*")
        p = t.start
        lines.append(f"{t.layout_seed} {p.x} {p.y} {p.heading} {t.target} {t.dstar}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tasks(path, env: GridWorld) -> list[Task]:
    """Load a task file, regenerating each layout from its seed under ``env``'s configuration."""
    want = env_digest(env.cfg)
    tasks = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("env=") and tok[4:] != want:
                    raise ValueError(f"{path}: tasks were generated for a different env configuration")
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        seed, x, y, heading, target, dstar = (int(p) for p in parts)
        lay = env.layout(seed)
        if not (0 <= x < lay.width and 0 <= y < lay.height) or not lay.walkable[y, x]:
            raise ValueError(f"{path}:{lineno}: start ({x}, {y}) is not a free cell")
        if heading % 45:
            raise ValueError(f"{path}:{lineno}: heading must be a multiple of 45")
        if target >= env.cfg.num_classes:
            raise ValueError(f"{path}:{lineno}: target class {target} out of range")
        tasks.append(Task(lay, Pose(x, y, heading % 360, 0), target, seed, dstar))
    if not tasks:
        raise ValueError(f"{path}: no tasks")
    return tasks


def write_meta(path, values: dict[str, object]) -> None:
    lines = [f"{k} = {v}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_meta(path) -> dict[str, str]:
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def base_meta(cfg: RunConfig, command: str) -> dict[str, object]:
    return {
        "command": command,
        "config_hash": cfg.digest(),
        "config_file": "config.cfg",
        "omtnav_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "kernel_backend": kernels.BACKEND,
        "precision": cfg.run.precision,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }


def train_job(cfg: RunConfig, seed: int, out_dir, variant: str | None = None, progress_every: float = 0.0) -> TrainResult:
    """Train one (variant, seed) and leave checkpoints, metrics, config and run.meta in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config(seed, variant)
    run_cfg = RunConfig(cfg.env, cfg.model, tcfg, cfg.eval, cfg.run)
    configmod.save(run_cfg, out / "config.cfg")
    meta = base_meta(run_cfg, " ".join(sys.argv))
    meta.update({"seed": seed, "variant": tcfg.variant, "status": "running"})
    write_meta(out / "run.meta", meta)
    result = train_run(tcfg, cfg.env, cfg.model, out, progress_every)
    meta.update(
        {
            "status": "complete",
            "frames": result.frames,
            "episodes": len(result.metrics),
            "seconds": f"{result.seconds:.1f}",
            "checkpoint": "checkpoint_final.omt",
            "checkpoint_sha256": hashlib.sha256(checkpoint.dumps(result.params)).hexdigest(),
        }
    )
    write_meta(out / "run.meta", meta)
    return result


def run_config_for_checkpoint(ckpt_path) -> RunConfig | None:
    """The config saved beside a checkpoint by :func:`train_job`, if any."""
    d = Path(ckpt_path).resolve().parent
    meta_path = d / "run.meta"
    if not meta_path.exists():
        return None
    meta = read_meta(meta_path)
    cfg_path = d / meta.get("config_file", "config.cfg")
    if not cfg_path.exists():
        return None
    return configmod.load(cfg_path)
