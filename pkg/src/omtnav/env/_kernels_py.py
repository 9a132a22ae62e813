"""Pure-Python reference kernels.

These are the semantics the compiled ``_kernels`` extension must reproduce
exactly; :mod:`omtnav.env.kernels` picks one of the two at import time.

Conventions shared by every kernel:

* ``cells[y, x]`` holds 0 (free), 1 (wall) or 2 (obstacle).
* heading index ``h`` in 0..7 is ``45 * h`` degrees clockwise from north
  (north is ``y - 1``).
* tilt index 0, 1, 2 means -30, 0, +30 degrees; an object of height level
  ``k`` is only in view at tilt index ``k``.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

# unit steps per heading index; diagonals move one cell on both axes
DX = (0, 1, 1, 1, 0, -1, -1, -1)
DY = (-1, -1, 0, 1, 1, 1, 0, -1)
_S = math.sqrt(0.5)
# exact unit vectors of each heading, used for the egocentric resampling
UX = (0.0, _S, 1.0, _S, 0.0, -_S, -1.0, -_S)
UY = (-1.0, -_S, 0.0, _S, 1.0, _S, 0.0, -_S)

FOV_HALF_DEG = 45.0
ANGLE_TOL = 1e-6

N_ACTIONS_MOVE = 8  # every action except Done


def line_clear(cells: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> bool:
    """True when no wall/obstacle lies strictly between the two cells (Bresenham)."""
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        if x == x1 and y == y1:
            return True
        if (x != x0 or y != y0) and cells[y, x] != 0:
            return False
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def bearing_deg(dx: int, dy: int, h: int) -> float:
    """Angle of offset (dx, dy) relative to heading ``h``, wrapped to (-180, 180]."""
    world = math.degrees(math.atan2(dx, -dy))
    b = world - 45.0 * h
    while b > 180.0:
        b -= 360.0
    while b <= -180.0:
        b += 360.0
    return b


def egocentric_raster(
    cells: np.ndarray, objcls: np.ndarray, x: int, y: int, h: int, size: int, n_classes: int
) -> np.ndarray:
    """One-hot semantic window centred on the agent, forward pointing up.

    Channels: object classes, then wall, free, unknown.  Cells outside the map
    or hidden behind a wall/obstacle are "unknown".
    """
    H, W = cells.shape
    half = size // 2
    wall_ch, free_ch, unk_ch = n_classes, n_classes + 1, n_classes + 2
    out = np.zeros((size, size, n_classes + 3), dtype=np.uint8)
    fx, fy = UX[h], UY[h]
    rx, ry = UX[(h + 2) % 8], UY[(h + 2) % 8]
    for r in range(size):
        f = half - r
        for c in range(size):
            s = c - half
            wx = x + int(math.floor(f * fx + s * rx + 0.5))
            wy = y + int(math.floor(f * fy + s * ry + 0.5))
            if wx < 0 or wy < 0 or wx >= W or wy >= H:
                out[r, c, unk_ch] = 1
            elif not line_clear(cells, x, y, wx, wy):
                out[r, c, unk_ch] = 1
            elif cells[wy, wx] != 0:
                out[r, c, wall_ch] = 1
            elif objcls[wy, wx] >= 0:
                out[r, c, objcls[wy, wx]] = 1
            else:
                out[r, c, free_ch] = 1
    return out


def visible_mask(cells: np.ndarray, objs: np.ndarray, max_r2: int) -> np.ndarray:
    """``mask[y, x, h, t]`` true when some object in ``objs`` is visible from that pose.

    ``objs`` rows are ``(x, y, height_level)``.  Visibility: squared cell
    distance within ``max_r2``, bearing inside the horizontal field of view,
    clear line of sight, and height level matching the tilt.
    """
    H, W = cells.shape
    mask = np.zeros((H, W, 8, 3), dtype=bool)
    for y in range(H):
        for x in range(W):
            if cells[y, x] != 0:
                continue
            for k in range(objs.shape[0]):
                ox, oy, lvl = int(objs[k, 0]), int(objs[k, 1]), int(objs[k, 2])
                dx, dy = ox - x, oy - y
                d2 = dx * dx + dy * dy
                if d2 == 0 or d2 > max_r2:
                    continue
                if not line_clear(cells, x, y, ox, oy):
                    continue
                for h in range(8):
                    if abs(bearing_deg(dx, dy, h)) <= FOV_HALF_DEG + ANGLE_TOL:
                        mask[y, x, h, lvl] = True
    return mask


def _apply_move(walkable, x, y, h, t, a):
    if a < 4:
        d = (h, h + 4, h + 2, h + 6)[a] % 8
        nx, ny = x + DX[d], y + DY[d]
        if 0 <= nx < walkable.shape[1] and 0 <= ny < walkable.shape[0] and walkable[ny, nx]:
            return nx, ny, h, t
        return x, y, h, t
    if a == 4:
        return x, y, (h + 1) % 8, t
    if a == 5:
        return x, y, (h + 7) % 8, t
    if a == 6:
        return x, y, h, min(t + 1, 2)
    return x, y, h, max(t - 1, 0)


def bfs_path(walkable: np.ndarray, goal: np.ndarray, x: int, y: int, h: int, t: int):
    """Shortest list of non-Done actions reaching a goal pose, or None."""
    if goal[y, x, h, t]:
        return []
    H, W = walkable.shape
    parent = np.full((H, W, 8, 3), -1, dtype=np.int64)
    paction = np.full((H, W, 8, 3), -1, dtype=np.int8)
    seen = np.zeros((H, W, 8, 3), dtype=bool)
    seen[y, x, h, t] = True
    queue = deque([(x, y, h, t)])
    while queue:
        cx, cy, ch, ct = queue.popleft()
        for a in range(N_ACTIONS_MOVE):
            nx, ny, nh, nt = _apply_move(walkable, cx, cy, ch, ct, a)
            if seen[ny, nx, nh, nt]:
                continue
            seen[ny, nx, nh, nt] = True
            parent[ny, nx, nh, nt] = ((cy * W + cx) * 8 + ch) * 3 + ct
            paction[ny, nx, nh, nt] = a
            if goal[ny, nx, nh, nt]:
                path = []
                px, py, ph, pt = nx, ny, nh, nt
                while (px, py, ph, pt) != (x, y, h, t):
                    path.append(int(paction[py, px, ph, pt]))
                    code = int(parent[py, px, ph, pt])
                    pt = code % 3
                    code //= 3
                    ph = code % 8
                    code //= 8
                    px = code % W
                    py = code // W
                path.reverse()
                return path
            queue.append((nx, ny, nh, nt))
    return None
