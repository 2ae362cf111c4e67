"""Binary feature cache: magic ``AURF``, u32 rank, u32 dims, float32 row-major (little endian)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..exceptions import IngestionError

MAGIC = b"AURF"


def write_feature(path, array) -> Path:
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())
    tmp.replace(path)
    return path


def read_feature(path) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read feature cache {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise IngestionError(f"{path} is not a feature cache (bad magic)")
    try:
        (rank,) = struct.unpack_from("<I", data, 4)
        dims = struct.unpack_from(f"<{rank}I", data, 8)
    except struct.error as exc:
        raise IngestionError(f"{path}: truncated header") from exc
    start = 8 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    if len(data) - start != 4 * count:
        raise IngestionError(f"{path}: payload holds {len(data) - start} bytes, expected {4 * count}")
    return np.frombuffer(data, dtype="<f4", offset=start).reshape(dims).astype(np.float32)


def is_valid_cache(path) -> bool:
    try:
        read_feature(path)
    except IngestionError:
        return False
    return True
