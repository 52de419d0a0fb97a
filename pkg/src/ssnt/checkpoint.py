"""Bit-exact binary checkpoints with a JSON metadata sidecar.

Layout (all integers little-endian u32, floats little-endian f64):

    magic "SSNT" | format version | kind tag (length + UTF-8)
    | parameter count | records | CRC32

Each record: name length, UTF-8 name, rank, one extent per dimension, then the
row-major float payload. The CRC32 covers every byte before it. Model
configuration and the vocabularies travel in `<path>.meta.json`, written with
sorted keys so the sidecar is deterministic too.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nn import Parameter

MAGIC = b"SSNT"
VERSION = 1


def _pack_u32(x: int) -> bytes:
    return struct.pack("<I", x)


def save_checkpoint(path, kind: str, params: list[Parameter], meta: dict) -> None:
    chunks = [MAGIC, _pack_u32(VERSION)]
    kind_b = kind.encode("utf-8")
    chunks.append(_pack_u32(len(kind_b)))
    chunks.append(kind_b)
    chunks.append(_pack_u32(len(params)))
    for p in params:
        name_b = p.name.encode("utf-8")
        chunks.append(_pack_u32(len(name_b)))
        chunks.append(name_b)
        chunks.append(_pack_u32(p.value.ndim))
        for dim in p.value.shape:
            chunks.append(_pack_u32(dim))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    payload = b"".join(chunks)
    payload += _pack_u32(zlib.crc32(payload))
    Path(path).write_bytes(payload)
    meta_path = Path(str(path) + ".meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
        fh.write("\n")


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, expect_kind: str | None = None):
    """Returns (kind, {name: array}, meta). Verifies magic, version, CRC."""
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, stored_crc = buf[:-4], struct.unpack("<I", buf[-4:])[0]
    if zlib.crc32(body) != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch, file is corrupt")
    r = _Reader(body, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version} not supported (expected {VERSION})")
    kind = r.take(r.u32()).decode("utf-8")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(
            f"{path}: checkpoint kind {kind!r} does not match expected {expect_kind!r}")
    count = r.u32()
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        n_vals = int(np.prod(shape)) if shape else 1
        payload = r.take(8 * n_vals)
        arrays[name] = np.frombuffer(payload, dtype="<f8").astype(
            np.float64).reshape(shape)
    if r.pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes after parameter records")
    meta_path = Path(str(path) + ".meta.json")
    meta = {}
    if meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    return kind, arrays, meta


def restore_parameters(params: list[Parameter], arrays: dict[str, np.ndarray], path):
    for p in params:
        if p.name not in arrays:
            raise CheckpointError(f"{path}: missing parameter {p.name!r}")
        arr = arrays[p.name]
        if arr.shape != p.value.shape:
            raise CheckpointError(
                f"{path}: parameter {p.name!r} has shape {arr.shape}, "
                f"expected {p.value.shape}")
        p.value[...] = arr
