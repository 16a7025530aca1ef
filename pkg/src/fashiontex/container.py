"""Named-tensor binary container used by mapper and training checkpoints.

Layout, all integers little-endian u32:

    magic "FTEXMP01" | version | meta_len | meta (UTF-8 JSON) |
    tensor_count | entries...

and each entry is

    name_len | name (UTF-8) | rows | cols | rows*cols float32 payload

Tensors are stored 2-D; vectors go in as 1 x N and scalars as 1 x 1. Entries
are written sorted by name and the meta JSON uses sorted keys, so identical
inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

CONTAINER_MAGIC = b"FTEXMP01"
CONTAINER_VERSION = 1


class ContainerError(ValueError):
    """Malformed or incompatible checkpoint container."""


def _to_2d(t: torch.Tensor) -> torch.Tensor:
    if t.dim() == 0:
        return t.reshape(1, 1)
    if t.dim() == 1:
        return t.reshape(1, -1)
    if t.dim() == 2:
        return t
    raise ContainerError(f"container stores at most 2-D tensors, got shape {tuple(t.shape)}")


def save_tensors(path, tensors: dict[str, torch.Tensor], meta: dict | None = None) -> None:
    meta_bytes = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [CONTAINER_MAGIC, struct.pack("<II", CONTAINER_VERSION, len(meta_bytes)), meta_bytes]
    chunks.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        t = _to_2d(tensors[name].detach().to(torch.float32))
        name_bytes = name.encode("utf-8")
        rows, cols = t.shape
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(np.ascontiguousarray(t.numpy(), dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Cursor:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ContainerError(
                f"{self.path}: truncated, needed {n} bytes at offset {self.pos}"
            )
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_tensors(path) -> tuple[dict[str, torch.Tensor], dict]:
    cur = _Cursor(Path(path).read_bytes(), path)
    magic = cur.take(len(CONTAINER_MAGIC))
    if magic != CONTAINER_MAGIC:
        raise ContainerError(f"{path}: bad magic {magic!r}")
    version = cur.u32()
    if version != CONTAINER_VERSION:
        raise ContainerError(
            f"{path}: container version {version}, this build reads version {CONTAINER_VERSION}"
        )
    meta = json.loads(cur.take(cur.u32()).decode("utf-8"))
    tensors: dict[str, torch.Tensor] = {}
    for _ in range(cur.u32()):
        name = cur.take(cur.u32()).decode("utf-8")
        if name in tensors:
            raise ContainerError(f"{path}: duplicate tensor name {name!r}")
        rows, cols = cur.u32(), cur.u32()
        payload = cur.take(4 * rows * cols)
        values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
        tensors[name] = torch.from_numpy(values)
    if cur.pos != len(cur.raw):
        raise ContainerError(f"{path}: {len(cur.raw) - cur.pos} trailing bytes")
    return tensors, meta
