"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"QMVIT1"
    u32 metadata length, metadata as UTF-8 JSON (config echo, RNG state, ...)
    u32 array count
    per array: u16 name length, name, u8 ndim, u32 dims..., float64 payload
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"QMVIT1"


class CheckpointError(ValueError):
    pass


def encode(params: dict, meta: dict) -> bytes:
    out = [MAGIC]
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out.append(struct.pack("<I", len(blob)))
    out.append(blob)
    out.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8")
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)))
        out.append(key)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode(buf: bytes):
    if buf[:6] != MAGIC:
        raise CheckpointError("not a QMVIT1 checkpoint")
    pos = 6
    try:
        (mlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        meta = json.loads(buf[pos:pos + mlen].decode("utf-8"))
        pos += mlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        params = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + klen].decode("utf-8")
            pos += klen
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            params[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).astype(np.float64).reshape(shape)
            pos += 8 * size
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return params, meta


def save(path, params: dict, meta: dict):
    Path(path).write_bytes(encode(params, meta))


def load(path):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(buf)
