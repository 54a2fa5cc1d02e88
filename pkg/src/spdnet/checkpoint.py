"""
Binary checkpoint format.

Layout (all integers little-endian)::

    8 bytes   magic  b"SPDNCKPT"
    1 byte    version (1)
    u32       metadata length, then that many UTF-8 bytes (config snapshot)
    u32       entry count
    per entry:
      u16     name length, then UTF-8 name
      u8      ndim, then ndim x u64 extents
      raw     prod(extents) little-endian float64 values, row-major

Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPDNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], metadata: str = "") -> None:
    meta = metadata.encode("utf-8")
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(meta)), meta]
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))  # tobytes copies to row-major
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        (mlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        metadata = buf[pos : pos + mlen].decode("utf-8")
        pos += mlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            n = int(np.prod(shape)) if ndim else 1
            if pos + 8 * n > len(buf):
                raise CheckpointError(f"{path}: truncated data for {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * n
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return arrays, metadata
