"""Binary model checkpoints.

Layout (all integers little-endian)::

    magic        6 bytes  b"EASAL1"
    version      u32      FORMAT_VERSION
    meta_len     u32      length of the UTF-8 JSON metadata that follows
    meta         bytes    {"widths": [...], "fusion_width": n, ...}, sorted keys
    n_tensors    u32
    per tensor:  u16 name_len, name (UTF-8), u8 ndim, ndim × u32 extents,
                 prod(extents) × float32 payload
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import Model

MAGIC = b"EASAL1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(model: Model, meta: dict | None = None) -> bytes:
    info = dict(meta or {})
    info["widths"] = list(model.widths)
    info["fusion_width"] = model.fusion_width
    blob = json.dumps(info, sort_keys=True, separators=(",", ":")).encode()
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(blob)), blob, struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        key = name.encode()
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes) -> tuple[Model, dict]:
    r = _Reader(data)
    if len(data) < len(MAGIC) or r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not an EASAL1 checkpoint (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len).decode())
    model = Model(meta["widths"], meta["fusion_width"])
    (n,) = r.unpack("<I")
    seen = set()
    for _ in range(n):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        if name not in model.params:
            raise CheckpointError(f"unknown parameter '{name}'")
        if tuple(shape) != model.params[name].shape:
            raise CheckpointError(f"parameter '{name}' has shape {shape}, expected {model.params[name].shape}")
        count = int(np.prod(shape))
        payload = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        model.params[name] = payload.astype(np.float64)
        seen.add(name)
    missing = set(model.params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after the last tensor")
    return model, meta


def save(path, model: Model, meta: dict | None = None):
    from ..io import atomic_write_bytes

    atomic_write_bytes(path, to_bytes(model, meta))


def load(path) -> tuple[Model, dict]:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
