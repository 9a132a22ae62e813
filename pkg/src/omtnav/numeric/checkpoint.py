"""Binary parameter checkpoints.

Layout: the 8 magic bytes ``OMTCKPT1``, then for every parameter in order::

    u16 LE   name length in bytes
    bytes    UTF-8 name
    u8       rank
    u32 LE   each dimension
    f32 LE   values, row-major
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

MAGIC = b"OMTCKPT1"


class CheckpointError(ValueError):
    pass


def dumps(params: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    write(buf, params)
    return buf.getvalue()


def write(fh: BinaryIO, params: dict[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    for name, value in params.items():
        raw = name.encode("utf-8")
        value = np.asarray(value)
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<B", value.ndim))
        fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
        fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not an OMT checkpoint (bad magic)")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * count > len(blob):
                raise CheckpointError(f"truncated values for {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * count
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return out


def save(path: str | Path, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(params))
    tmp.replace(path)


def load(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
