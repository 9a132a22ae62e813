"""Reference implementations used as test oracles.  Deliberately naive."""

from __future__ import annotations

import math

from omtnav.env import Pose, is_visible

# (dx, dy) per heading index, clockwise from north (north is y - 1)
_DIRS = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)]


def naive_move(layout, pose: Pose, action: int) -> Pose:
    x, y, h, t = pose.x, pose.y, pose.heading // 45, (pose.tilt + 30) // 30
    if action in (0, 1, 2, 3):
        dx, dy = _DIRS[(h + (0, 4, 2, 6)[action]) % 8]
        nx, ny = x + dx, y + dy
        occupied = any(o.x == nx and o.y == ny for o in layout.objects)
        if 0 <= nx < layout.width and 0 <= ny < layout.height and layout.cells[ny, nx] == 0 and not occupied:
            x, y = nx, ny
    elif action == 4:
        h = (h + 1) % 8
    elif action == 5:
        h = (h - 1) % 8
    elif action == 6:
        t = min(t + 1, 2)
    elif action == 7:
        t = max(t - 1, 0)
    return Pose(x, y, 45 * h, 30 * t - 30)


def sees_target(layout, pose: Pose, target: int) -> bool:
    return any(is_visible(layout, pose, o) for o in layout.objects if o.cls == target)


def brute_force_dstar(layout, start: Pose, target: int, max_len: int = 10) -> int | None:
    """Enumerate every action sequence of up to ``max_len`` actions (including the final Done).

    Sequences are expanded one action at a time; the set of end poses after
    exactly ``k`` movement actions is kept (two sequences that end in the same
    pose have identical futures).  Returns the shortest length or None.
    """
    frontier = {Pose(start.x, start.y, start.heading, 0)}
    for k in range(max_len):
        if any(sees_target(layout, p, target) for p in frontier):
            return k + 1
        frontier = {naive_move(layout, p, a) for p in frontier for a in range(8)}
    return None


def naive_sr_spl(successes, dstars, steps):
    n = len(successes)
    sr = sum(1 for s in successes if s) / n
    total = 0.0
    for s, d, k in zip(successes, dstars, steps):
        if s:
            total += min(1.0, d / k)
    return sr, total / n


def naive_temporal(T: int, d: int):
    """Direct evaluation of the sinusoidal slot code, one entry at a time."""
    out = [[0.0] * d for _ in range(T)]
    for pos in range(T):
        for j in range(d):
            i = j // 2
            angle = pos / (10000.0 ** (2.0 * i / T))
            out[pos][j] = math.sin(angle) if j % 2 == 0 else math.cos(angle)
    return out
