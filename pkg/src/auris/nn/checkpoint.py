"""AURM1 model checkpoints.

Layout (little-endian)::

    b"AURM1"  u32 descriptor_len  descriptor (utf-8)
    u32 n_tensors
    per tensor: u16 name_len  name  u32 rank  u32 dims[rank]  float32 payload
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..exceptions import IngestionError

MAGIC = b"AURM1"


def save_checkpoint(path, descriptor: str, tensors: dict[str, np.ndarray]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    desc = descriptor.encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(desc)), desc, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read checkpoint {path}: {exc}") from exc
    if buf[:5] != MAGIC:
        raise IngestionError(f"{path} is not an AURM1 checkpoint")
    try:
        pos = 5
        (dlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        descriptor = buf[pos:pos + dlen].decode("utf-8")
        pos += dlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            if pos + 4 * n > len(buf):
                raise IngestionError(f"{path}: tensor {name} is truncated")
            tensors[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * n
    except (struct.error, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path}: malformed checkpoint ({exc})") from exc
    return descriptor, tensors
