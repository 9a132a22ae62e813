"""Kernel dispatch: the compiled extension when it imports, else the Python reference.

Set ``OMTNAV_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("OMTNAV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

line_clear = _impl.line_clear
bearing_deg = _impl.bearing_deg
egocentric_raster = _impl.egocentric_raster
visible_mask = _impl.visible_mask
bfs_path = _impl.bfs_path

DX = _kernels_py.DX
DY = _kernels_py.DY
FOV_HALF_DEG = _kernels_py.FOV_HALF_DEG
ANGLE_TOL = _kernels_py.ANGLE_TOL
