"""Binary checkpoints: named parameter arrays plus a JSON config blob.

Layout (all integers little-endian):

    magic  b"RLIE"
    u32    format version (currently 1)
    u32    array count
    per array:
        u16   name length, then UTF-8 name
        u8    ndim, then ndim x u32 dims
        u8    dtype tag (0 = float32, 1 = float64)
        raw   row-major array payload
    u32    config length, then UTF-8 JSON config
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"RLIE"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(RuntimeError):
    """Malformed checkpoint file (bad magic, version, or truncation)."""


def save_checkpoint(path, arrays: dict, config: dict, float32: bool = False):
    """Write named arrays and a config dict; float32 halves the file size."""
    tag = 0 if float32 else 1
    dtype = _DTYPES[tag]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype=dtype)
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(struct.pack("<B", tag))
            fh.write(arr.tobytes())
        blob = json.dumps(config, sort_keys=True).encode()
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def _take(buf: bytes, pos: int, n: int, what: str) -> tuple[bytes, int]:
    if pos + n > len(buf):
        raise CheckpointError(f"truncated checkpoint: needed {n} bytes for {what} "
                              f"at offset {pos}, file has {len(buf)}")
    return buf[pos:pos + n], pos + n


def load_checkpoint(path) -> tuple[dict, dict]:
    """Read back (arrays, config).  Arrays keep their stored precision."""
    with open(path, "rb") as fh:
        buf = fh.read()
    head, pos = _take(buf, 0, 4, "magic")
    if head != MAGIC:
        raise CheckpointError(f"bad magic {head!r}, expected {MAGIC!r}")
    raw, pos = _take(buf, pos, 8, "header")
    version, count = struct.unpack("<II", raw)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, "
                              f"expected {VERSION}")
    arrays = {}
    for k in range(count):
        raw, pos = _take(buf, pos, 2, f"name length of array {k}")
        (name_len,) = struct.unpack("<H", raw)
        raw, pos = _take(buf, pos, name_len, f"name of array {k}")
        name = raw.decode()
        raw, pos = _take(buf, pos, 1, f"ndim of {name!r}")
        ndim = raw[0]
        raw, pos = _take(buf, pos, 4 * ndim, f"dims of {name!r}")
        dims = struct.unpack(f"<{ndim}I", raw)
        raw, pos = _take(buf, pos, 1, f"dtype of {name!r}")
        if raw[0] not in _DTYPES:
            raise CheckpointError(f"unknown dtype tag {raw[0]} for {name!r}")
        dtype = _DTYPES[raw[0]]
        n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        raw, pos = _take(buf, pos, n_bytes, f"payload of {name!r}")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    raw, pos = _take(buf, pos, 4, "config length")
    (cfg_len,) = struct.unpack("<I", raw)
    raw, pos = _take(buf, pos, cfg_len, "config blob")
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after config")
    return arrays, json.loads(raw.decode())
