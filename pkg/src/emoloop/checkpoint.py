"""Binary checkpoint container.

Layout: magic ``UEMO``, version as little-endian u32, then repeated records
``{name_len u32, name UTF-8, rank u32, dims u32 x rank, values f64 LE}``.
Record order is preserved, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"UEMO"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, entries: dict[str, np.ndarray], version: int = VERSION):
    """Write named float64 arrays in iteration order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", version))
        for name, arr in entries.items():
            arr = np.asarray(arr, dtype="<f8")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a container back into an ordered {name: array} mapping."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    pos = 4
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {version}")
    entries: dict[str, np.ndarray] = {}
    while pos < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(dims)
        pos += 8 * count
        if name in entries:
            raise CheckpointError(f"{path}: duplicate record name {name!r}")
        entries[name] = arr.copy()
    return entries


def checkpoint_hash(path) -> str:
    """SHA-256 of the container bytes; used to assert models stay frozen."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
