"""Binary feature-map files.

Layout (all little-endian):

====== ======================= =======================================
offset field                   contents
====== ======================= =======================================
0      magic                   4 bytes, ``GCT1``
4      rank                    uint32, 3 or 4
8      dims                    rank x uint64: ``C,H,W`` or ``C,T,H,W``
..     payload                 prod(dims) x float32, C-order
====== ======================= =======================================

Round-trips are lossless at 32-bit precision; maps held at higher precision
are truncated on write.
"""

import struct
from pathlib import Path

import numpy as np

from .types import FeatureMap, FormatError

MAGIC = b"GCT1"
_RANKS = (3, 4)


def write_tensor(path, fmap: FeatureMap) -> None:
    grid = fmap.to_grid().astype("<f4")
    dims = grid.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(dims)))
        fh.write(struct.pack(f"<{len(dims)}Q", *dims))
        fh.write(grid.tobytes(order="C"))


def read_tensor(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if rank not in _RANKS:
        raise FormatError(f"{path}: rank must be 3 or 4, got {rank}")
    header_end = 8 + 8 * rank
    if len(raw) < header_end:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}Q", raw, 8)
    if any(d < 1 for d in dims):
        raise FormatError(f"{path}: dims must be positive, got {dims}")
    count = 1
    for d in dims:
        count *= d
    expected = header_end + 4 * count
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload is {len(raw) - header_end} bytes, dims {dims} need {4 * count}"
        )
    payload = np.frombuffer(raw, dtype="<f4", count=count, offset=header_end)
    return FeatureMap.from_grid(payload.reshape(dims).copy())
