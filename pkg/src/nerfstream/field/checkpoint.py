"""Uncompressed model checkpoints ("NRF1")."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NRF1"


def write_checkpoint(model) -> bytes:
    """Serialize the tensors of ``model``.

    Layout: magic, tensor count (u32), per tensor rank (u32) and dims (u32 each),
    then every tensor row-major as little-endian float64.
    """
    tensors = model.tensors()
    head = bytearray(MAGIC)
    head += struct.pack("<I", len(tensors))
    for t in tensors:
        head += struct.pack("<I", t.ndim)
        head += struct.pack(f"<{t.ndim}I", *t.shape)
    body = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in tensors)
    return bytes(head) + body


def read_checkpoint(data: bytes, template) -> "object":
    """Inverse of :func:`write_checkpoint`; ``template`` supplies encoding and render settings."""
    if data[:4] != MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r}")
    (count,) = struct.unpack_from("<I", data, 4)
    off = 8
    shapes = []
    for _ in range(count):
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shapes.append(struct.unpack_from(f"<{rank}I", data, off))
        off += 4 * rank
    tensors = []
    for shape in shapes:
        n = int(np.prod(shape))
        tensors.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64))
        off += 8 * n
    if off != len(data):
        raise ValueError(f"checkpoint has {len(data) - off} trailing bytes")
    return template.with_tensors(tensors)


def save_checkpoint(model, path) -> None:
    Path(path).write_bytes(write_checkpoint(model))


def load_checkpoint(path, template):
    return read_checkpoint(Path(path).read_bytes(), template)
