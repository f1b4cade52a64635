"""Named-tensor archive.

Layout (all integers little-endian)::

    b"DBGN" | version u16 | entry count u32
    per entry: name length u32 | UTF-8 name | dtype tag u8 (1 = float32)
               | rank u32 | rank x dim u32 | raw float32 data
    metadata length u32 | UTF-8 JSON (sorted keys)

Entries are written in sorted name order so equal contents give equal bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DBGN"
VERSION = 1
F32 = 1


class CheckpointError(ValueError):
    pass


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def encode(tensors: dict[str, np.ndarray], metadata: dict | None = None) -> bytes:
    out = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"refusing to save non-finite tensor {name}")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<BI", F32, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    out.append(struct.pack("<I", len(meta)) + meta)
    return b"".join(out)


def decode(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(buf)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a DBGN checkpoint")
    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode("utf-8")
        tag, rank = struct.unpack("<BI", take(5))
        if tag != F32:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    (mlen,) = struct.unpack("<I", take(4))
    metadata = json.loads(bytes(take(mlen)).decode("utf-8"))
    if pos != len(view):
        raise CheckpointError("trailing bytes after metadata")
    return tensors, metadata


def save(path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(tensors, metadata))
    os.replace(tmp, path)


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return decode(Path(path).read_bytes())
