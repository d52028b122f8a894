"""AETF binary field files and key=value sidecar metadata.

Layout: bytes 0-3 ASCII ``AETF``, then little-endian u32 version (=1),
u32 dim, u32 dims[dim], then prod(dims) float64 little-endian values,
row-major with the last axis fastest.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField

MAGIC = b"AETF"
VERSION = 1


def write_array(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype=np.float64)
    dims = values.shape
    header = MAGIC + struct.pack("<II", VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype("<f8").tobytes(order="C"))


def read_array(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{ndim}I", blob, 12)
    offset = 12 + 4 * ndim
    count = int(np.prod(dims))
    expected = offset + 8 * count
    if len(blob) != expected:
        raise ValueError(f"{path}: size {len(blob)} does not match header ({expected})")
    values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return values.reshape(dims).astype(np.float64)


def write_field(path, f: ScalarField) -> None:
    write_array(path, f.values)


def read_field(path) -> ScalarField:
    values = read_array(path)
    dims = values.shape
    if len(dims) not in (2, 3) or len(set(dims)) != 1:
        raise ValueError(f"{path}: not a cube-grid field, dims {dims}")
    return ScalarField(Grid(len(dims), dims[0]), values)


def write_meta(path, meta: dict) -> None:
    lines = [f"{k}={meta[k]}\n" for k in meta]
    Path(path).write_text("".join(lines))


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def digest_array(values: np.ndarray) -> str:
    """Short provenance hash of an array's contents."""
    raw = np.ascontiguousarray(values, dtype="<f8").tobytes(order="C")
    return hashlib.sha256(raw).hexdigest()[:16]
