"""Tiny binary tensor container for byte-reproducible artifacts.

Layout: magic "PBT1", one rank byte (1..3), rank unsigned 64-bit little-endian
dims, then the payload as row-major little-endian doubles.  Writing and
reading round-trip bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"PBT1"
MAX_RANK = 3


def write_tensor(path, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
    if not 1 <= a.ndim <= MAX_RANK:
        raise ValidationError(f"tensor rank must be 1..{MAX_RANK}, got {a.ndim}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 5:
        raise FormatError(f"{path}: truncated header")
    rank = blob[4]
    if not 1 <= rank <= MAX_RANK:
        raise FormatError(f"{path}: unsupported rank {rank}")
    header_end = 5 + 8 * rank
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack(f"<{rank}Q", blob[5:header_end])
    expected = 8 * int(np.prod(dims))
    payload = blob[header_end:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, dims {dims} need {expected}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
