"""Compare the compiled environment kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on the same inputs through both backends; outputs are
checked for equality before timing.
"""

import argparse
import sys
import timeit

import numpy as np

from omtnav.env import EnvConfig, GenConfig, GridWorld
from omtnav.env import _kernels_py as py
from omtnav.env.gridworld import goal_mask

try:
    from omtnav.env import _kernels as cy
except ImportError:
    cy = None


def _cases(width, obstacles):
    env = GridWorld(EnvConfig(gen=GenConfig(width=width, height=width, obstacle_density=obstacles, n_objects=4)))
    lay = env.layout(3)
    task = env.generate_task(3, 0)
    s = task.start
    objs = np.array([(o.x, o.y, o.height) for o in lay.objects if o.cls == task.target], dtype=np.int32).reshape(-1, 3)
    goal = goal_mask(lay, task.target)
    pairs = [(x0, y0, x1, y1) for y0 in range(lay.height) for x0 in range(lay.width) for y1 in (0, lay.height - 1) for x1 in (0, lay.width - 1)]
    nc = env.cfg.num_classes
    return {
        "line_clear": lambda k: [k.line_clear(lay.cells, *p) for p in pairs],
        "egocentric_raster": lambda k: [k.egocentric_raster(lay.cells, lay.objcls, s.x, s.y, h, 11, nc) for h in range(8)],
        "visible_mask": lambda k: k.visible_mask(lay.cells, objs, 9),
        "bfs_path": lambda k: k.bfs_path(lay.walkable, goal, s.x, s.y, s.h, s.t),
    }


def _same(a, b):
    if isinstance(a, list):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'room':<12}{'kernel':<20}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for label, width, dens in (("6x6", 6, 0.0), ("9x9 obst", 9, 0.15), ("16x16 obst", 16, 0.15)):
        for name, fn in _cases(width, dens).items():
            if not _same(fn(py), fn(cy)):
                print(f"{name}: backends disagree", file=sys.stderr)
                return 1
            n = 3 if name in ("visible_mask", "bfs_path") else 20
            tp = min(timeit.repeat(lambda: fn(py), number=n, repeat=args.repeat)) / n * 1e3
            tc = min(timeit.repeat(lambda: fn(cy), number=n, repeat=args.repeat)) / n * 1e3
            print(f"{label:<12}{name:<20}{tp:>12.3f}{tc:>12.4f}{tp / tc:>9.0f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
