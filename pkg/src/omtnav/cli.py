"""``omtnav`` command line: train, eval, ablate, render, gen-tasks."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as configmod
from . import runs
from .config import ConfigError, RunConfig
from .env.gridworld import GridWorld
from .env.layout import Layout
from .policy import VARIANTS, OMTModel

log = logging.getLogger("omtnav")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            return range(int(lo), int(lo) + 1)
        a, b = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if b < a:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return range(a, b + 1)  # inclusive on both ends


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in VARIANTS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown variant {bad[0]!r}; choose from {', '.join(VARIANTS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="omtnav", description="Object Memory Transformer navigation agent on a gridworld.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train one agent")
    t.add_argument("--config", type=Path)
    t.add_argument("--seed", type=int, default=None, help="root seed (default: first of run.seeds)")
    t.add_argument("--out", type=Path, default=None)
    t.add_argument("--variant", choices=VARIANTS, default=None)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--tasks", type=Path, default=None, help="task file (default: fresh tasks on the test layouts)")
    e.add_argument("--episodes", type=int, default=None)
    e.add_argument("--cap", type=int, default=300)
    e.add_argument("--mode", choices=("greedy", "sample"), default=None)
    e.add_argument("--config", type=Path, default=None, help="default: config.cfg beside the checkpoint")
    e.add_argument("--variant", choices=VARIANTS, default=None)
    e.add_argument("--report", type=Path, default=None, help="write the report CSV here")
    e.add_argument("--trace-dir", type=Path, default=None, help="write per-episode trajectories and layouts")
    e.add_argument("--random", action="store_true", help="score a uniform random agent instead")

    a = sub.add_parser("ablate", help="train and evaluate several variants")
    a.add_argument("--config", type=Path)
    a.add_argument("--variants", type=_name_list, required=True)
    a.add_argument("--seeds", type=_int_list, required=True)
    a.add_argument("--no-train", action="store_true")
    a.add_argument("--out", type=Path, default=None)

    r = sub.add_parser("render", help="draw a trajectory as a PPM image")
    r.add_argument("--trajectory", type=Path, required=True)
    r.add_argument("--layout", type=Path, required=True)
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--scale", type=int, default=8)

    g = sub.add_parser("gen-tasks", help="write an evaluation task file")
    g.add_argument("--seed-range", type=_seed_range, required=True, help="layout seeds A..B, inclusive")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--count", type=int, default=None, help="number of tasks (default: eval.episodes)")
    g.add_argument("--config", type=Path, default=None)
    return p


def _load_config(path: Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    return configmod.load(path)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = cfg.run.seeds[0] if args.seed is None else args.seed
    out = args.out or Path(cfg.run.out_dir)
    res = runs.train_job(cfg, seed, out, args.variant, progress_every=10.0 if args.verbose else 0.0)
    print(f"trained {res.frames} frames, {len(res.metrics)} episodes in {res.seconds:.1f}s -> {out / 'checkpoint_final.omt'}")
    return 0


def _eval_config(args) -> RunConfig:
    if args.config is not None:
        return _load_config(args.config)
    cfg = runs.run_config_for_checkpoint(args.checkpoint)
    return cfg if cfg is not None else RunConfig().validate()


def cmd_eval(args) -> int:
    from . import evaluation as ev
    from .perception import Perception

    if args.cap < 1:
        raise UsageError("--cap must be positive")
    if args.episodes is not None and args.episodes < 1:
        raise UsageError("--episodes must be positive")
    cfg = _eval_config(args)
    variant = args.variant or cfg.train.variant
    mode = args.mode or cfg.eval.mode
    env = GridWorld(cfg.env)
    if args.tasks is not None:
        tasks = runs.read_tasks(args.tasks, env)
        if args.episodes is not None:
            tasks = [tasks[i % len(tasks)] for i in range(args.episodes)]
    else:
        lo, hi = cfg.eval.test_layouts
        tasks = ev.eval_tasks(env, range(lo, hi), args.episodes or cfg.eval.episodes)
    if args.random:
        policy = ev.RandomPolicy()
        variant = "random"
    else:
        dtype = np.float32 if cfg.run.precision == 32 else np.float64
        model = OMTModel(cfg.model, variant)
        perception = Perception(cfg.env, cfg.model.d_w, cfg.model.d_v, cfg.train.perception_seed)
        policy = ev.load_policy(args.checkpoint, model, perception, dtype)
    records = ev.evaluate(policy, tasks, env, args.cap, mode, cfg.eval.seed)
    rep = ev.compute_metrics(records)
    print(f"{variant}: episodes {rep.episodes}  SR {rep.sr:.4f}  SPL {rep.spl:.4f}  mean steps (success) {rep.mean_steps_success:.2f}")
    for t, m in rep.per_target.items():
        print(f"  target {t}: episodes {m.episodes}  SR {m.sr:.4f}  SPL {m.spl:.4f}")
    if args.report is not None:
        seed = runs.read_meta(args.checkpoint.parent / "run.meta").get("seed", "") if (args.checkpoint.parent / "run.meta").exists() else ""
        ev.write_report([{"variant": variant, "seed": seed, "SR": rep.sr, "SPL": rep.spl, "episodes": rep.episodes}], args.report)
    if args.trace_dir is not None:
        args.trace_dir.mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(records):
            ev.write_trajectory(rec, args.trace_dir / f"episode_{i:04d}.csv")
            rec.task.layout.save(args.trace_dir / f"layout_{rec.task.layout_seed}.txt")
    return 0


def cmd_ablate(args) -> int:
    from . import evaluation as ev

    cfg = _load_config(args.config)
    out = args.out or Path(cfg.run.out_dir)
    rows = ev.run_ablation_suite(cfg, args.variants, args.seeds, out, args.no_train, progress_every=10.0 if args.verbose else 0.0)
    for s in ev.summarize(rows):
        print(f"{s['variant']:<22} seeds {s['seeds']}  median SR {s['SR']:.4f}  median SPL {s['SPL']:.4f}")
    print(f"report: {out / 'report.csv'}")
    return 0


def cmd_render(args) -> int:
    from . import evaluation as ev

    traj = ev.read_trajectory(args.trajectory)
    layout = Layout.load(args.layout)
    for p in traj.poses:
        if not (0 <= p.x < layout.width and 0 <= p.y < layout.height):
            raise ValueError(f"trajectory pose ({p.x}, {p.y}) lies outside the layout")
    img = ev.render_topdown(traj.poses, traj.target, layout, traj.steps, scale=args.scale)
    ev.save_ppm(img, args.out)
    print(f"wrote {args.out} ({img.shape[1]}x{img.shape[0]})")
    return 0


def cmd_gen_tasks(args) -> int:
    from . import evaluation as ev

    cfg = _load_config(args.config)
    n = args.count if args.count is not None else cfg.eval.episodes
    if n < 1:
        raise UsageError("--count must be positive")
    env = GridWorld(cfg.env)
    tasks = ev.eval_tasks(env, args.seed_range, n)
    runs.write_tasks(tasks, cfg.env, args.out)
    print(f"wrote {len(tasks)} tasks on layouts {args.seed_range.start}..{args.seed_range.stop - 1} to {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "render": cmd_render,
    "gen-tasks": cmd_gen_tasks,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
