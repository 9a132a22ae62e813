# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``; semantics must match exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, floor, sqrt, fabs, M_PI

cnp.import_array()

cdef int DX[8]
cdef int DY[8]
cdef double UX[8]
cdef double UY[8]
DX[:] = [0, 1, 1, 1, 0, -1, -1, -1]
DY[:] = [-1, -1, 0, 1, 1, 1, 0, -1]

cdef double _S = sqrt(0.5)
UX[:] = [0.0, _S, 1.0, _S, 0.0, -_S, -1.0, -_S]
UY[:] = [-1.0, -_S, 0.0, _S, 1.0, _S, 0.0, -_S]

cdef double FOV_HALF_DEG = 45.0
cdef double ANGLE_TOL = 1e-6
cdef double RAD2DEG = 180.0 / M_PI


cdef inline bint _line_clear(const signed char[:, ::1] cells, int x0, int y0, int x1, int y1) nogil:
    cdef int dx = x1 - x0 if x1 > x0 else x0 - x1
    cdef int dy = -(y1 - y0 if y1 > y0 else y0 - y1)
    cdef int sx = 1 if x0 < x1 else -1
    cdef int sy = 1 if y0 < y1 else -1
    cdef int err = dx + dy
    cdef int x = x0, y = y0, e2
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


def line_clear(cells, int x0, int y0, int x1, int y1):
    cdef const signed char[:, ::1] c = np.ascontiguousarray(cells, dtype=np.int8)
    return bool(_line_clear(c, x0, y0, x1, y1))


cdef inline double _bearing(int dx, int dy, int h) nogil:
    cdef double b = atan2(<double>dx, <double>(-dy)) * RAD2DEG - 45.0 * h
    while b > 180.0:
        b -= 360.0
    while b <= -180.0:
        b += 360.0
    return b


def bearing_deg(int dx, int dy, int h):
    return _bearing(dx, dy, h)


def egocentric_raster(cells, objcls, int x, int y, int h, int size, int n_classes):
    cdef const signed char[:, ::1] c = np.ascontiguousarray(cells, dtype=np.int8)
    cdef const short[:, ::1] oc = np.ascontiguousarray(objcls, dtype=np.int16)
    cdef int H = c.shape[0], W = c.shape[1]
    cdef int half = size // 2
    cdef int wall_ch = n_classes, free_ch = n_classes + 1, unk_ch = n_classes + 2
    out_arr = np.zeros((size, size, n_classes + 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr
    cdef double fx = UX[h], fy = UY[h]
    cdef double rx = UX[(h + 2) % 8], ry = UY[(h + 2) % 8]
    cdef int r, col, f, s, wx, wy
    with nogil:
        for r in range(size):
            f = half - r
            for col in range(size):
                s = col - half
                wx = x + <int>floor(f * fx + s * rx + 0.5)
                wy = y + <int>floor(f * fy + s * ry + 0.5)
                if wx < 0 or wy < 0 or wx >= W or wy >= H:
                    out[r, col, unk_ch] = 1
                elif not _line_clear(c, x, y, wx, wy):
                    out[r, col, unk_ch] = 1
                elif c[wy, wx] != 0:
                    out[r, col, wall_ch] = 1
                elif oc[wy, wx] >= 0:
                    out[r, col, oc[wy, wx]] = 1
                else:
                    out[r, col, free_ch] = 1
    return out_arr


def visible_mask(cells, objs, int max_r2):
    cdef const signed char[:, ::1] c = np.ascontiguousarray(cells, dtype=np.int8)
    cdef const int[:, ::1] ob = np.ascontiguousarray(objs, dtype=np.int32).reshape(-1, 3)
    cdef int H = c.shape[0], W = c.shape[1]
    mask_arr = np.zeros((H, W, 8, 3), dtype=bool)
    cdef cnp.npy_bool[:, :, :, ::1] mask = mask_arr
    cdef int x, y, k, h, dx, dy, d2, lvl
    with nogil:
        for y in range(H):
            for x in range(W):
                if c[y, x] != 0:
                    continue
                for k in range(ob.shape[0]):
                    dx = ob[k, 0] - x
                    dy = ob[k, 1] - y
                    lvl = ob[k, 2]
                    d2 = dx * dx + dy * dy
                    if d2 == 0 or d2 > max_r2:
                        continue
                    if not _line_clear(c, x, y, ob[k, 0], ob[k, 1]):
                        continue
                    for h in range(8):
                        if fabs(_bearing(dx, dy, h)) <= FOV_HALF_DEG + ANGLE_TOL:
                            mask[y, x, h, lvl] = True
    return mask_arr


def bfs_path(walkable, goal, int x, int y, int h, int t):
    cdef const cnp.npy_bool[:, ::1] wk = np.ascontiguousarray(walkable, dtype=bool)
    cdef const cnp.npy_bool[:, :, :, ::1] gl = np.ascontiguousarray(goal, dtype=bool)
    if gl[y, x, h, t]:
        return []
    cdef int H = wk.shape[0], W = wk.shape[1]
    cdef Py_ssize_t n = H * W * 24
    parent_arr = np.full(n, -1, dtype=np.int64)
    act_arr = np.full(n, -1, dtype=np.int8)
    queue_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] parent = parent_arr
    cdef signed char[::1] pact = act_arr
    cdef long long[::1] queue = queue_arr
    cdef Py_ssize_t head = 0, tail = 0
    cdef long long start = ((y * W + x) * 8 + h) * 3 + t, code, ncode, found = -1
    cdef int cx, cy, ch, ct, nx, ny, nh, nt, a, d
    parent[start] = start
    queue[tail] = start
    tail += 1
    with nogil:
        while head < tail and found < 0:
            code = queue[head]
            head += 1
            ct = code % 3
            ch = (code // 3) % 8
            cx = (code // 24) % W
            cy = code // (24 * W)
            for a in range(8):
                nx, ny, nh, nt = cx, cy, ch, ct
                if a < 4:
                    if a == 0:
                        d = ch
                    elif a == 1:
                        d = (ch + 4) % 8
                    elif a == 2:
                        d = (ch + 2) % 8
                    else:
                        d = (ch + 6) % 8
                    if 0 <= cx + DX[d] < W and 0 <= cy + DY[d] < H and wk[cy + DY[d], cx + DX[d]]:
                        nx = cx + DX[d]
                        ny = cy + DY[d]
                elif a == 4:
                    nh = (ch + 1) % 8
                elif a == 5:
                    nh = (ch + 7) % 8
                elif a == 6:
                    nt = ct + 1 if ct < 2 else 2
                else:
                    nt = ct - 1 if ct > 0 else 0
                ncode = ((ny * W + nx) * 8 + nh) * 3 + nt
                if parent[ncode] >= 0:
                    continue
                parent[ncode] = code
                pact[ncode] = a
                if gl[ny, nx, nh, nt]:
                    found = ncode
                    break
                queue[tail] = ncode
                tail += 1
    if found < 0:
        return None
    path = []
    code = found
    while code != start:
        path.append(int(pact[code]))
        code = parent[code]
    path.reverse()
    return path
