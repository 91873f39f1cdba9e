"""The "XGCK" binary container for named float32 tensors.

Layout (all integers little-endian u32)::

    b"XGCK" | version=1 | config_len | config (UTF-8) | tensor_count |
    per tensor: name_len | name (UTF-8) | rank | dims[rank] | float32 LE data
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"XGCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(config_text: str, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = config_text.encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<I", arr.ndim)]
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> tuple[str, dict[str, np.ndarray]]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes for {what} at offset {pos}, "
                                  f"file has {len(buf)}")
        out = buf[pos:pos + n]
        pos += n
        return out

    def u32(what: str) -> int:
        return struct.unpack("<I", take(4, what))[0]

    magic = take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic at offset 0: expected {MAGIC.decode()!r}, got {magic!r}")
    version = u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} at offset 4: expected {VERSION}")
    config = take(u32("config length"), "config").decode("utf-8")
    count = u32("tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        name = take(u32(f"tensor {i} name length"), f"tensor {i} name").decode("utf-8")
        rank = u32(f"rank of {name!r}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * n, f"data of {name!r}"), dtype="<f4")
        tensors[name] = data.reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after offset {pos}")
    return config, tensors


def write_checkpoint(path, config_text: str, tensors: dict[str, np.ndarray]) -> None:
    """Write atomically (temp file + rename)."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(to_bytes(config_text, tensors))
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        return from_bytes(f.read())
