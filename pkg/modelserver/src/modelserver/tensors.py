"""Reader for the IGT raw-tensor container.

Layout: magic ``IGT1``, u32 little-endian rank, rank u32 LE dims, float32 LE
payload in row-major order.  Kept independent of the engine so the format is
pinned by two implementations.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


def read_igt(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != b"IGT1":
        raise ValueError(f"{path}: not an IGT container")
    (rank,) = struct.unpack_from("<I", raw, 4)
    if not 1 <= rank <= 8:
        raise ValueError(f"{path}: implausible rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", raw, 8)
    offset = 8 + 4 * rank
    count = 1
    for d in dims:
        if d == 0:
            raise ValueError(f"{path}: zero-sized dimension")
        count *= d
    if len(raw) < offset + 4 * count:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(dims).copy()
