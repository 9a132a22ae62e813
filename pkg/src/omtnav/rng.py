"""Seed splitting.

Every random stream is ``numpy.random.Generator(PCG64(SeedSequence([root, *path])))``
where ``path`` is a tuple of small integers naming the consumer.  Stream ids
are fixed constants so that adding a new consumer never shifts an existing one.
"""

from __future__ import annotations

import numpy as np

LAYOUT = 1
TASK = 2
EMBEDDING = 3
SCENE_ENCODER = 4
PARAM_INIT = 5
WORKER = 6
EVAL = 7
WORKER_ENV = 8


def stream(root: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(root), *map(int, path)])))
