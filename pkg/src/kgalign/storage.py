"""Binary persistence for embedding and similarity matrices.

Layout: four little-endian int64 header words ``(magic, version, rows, cols)``
followed by ``rows * cols`` little-endian float64 values in row-major order.
"""
from __future__ import annotations

import numpy as np

EMBEDDING_MAGIC = int.from_bytes(b"KGAEMBED", "little")
MATRIX_MAGIC = int.from_bytes(b"KGASIMMX", "little")
FORMAT_VERSION = 1

_HEADER = np.dtype("<i8")
_VALUES = np.dtype("<f8")


class FormatError(ValueError):
    pass


def _write(path, magic, values):
    values = np.ascontiguousarray(values, dtype=_VALUES)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {values.shape}")
    header = np.array([magic, FORMAT_VERSION, *values.shape], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(values.tobytes())


def _read(path, magic, kind):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 32:
        raise FormatError(f"{path}: truncated header")
    got_magic, version, rows, cols = np.frombuffer(raw[:32], dtype=_HEADER).tolist()
    if got_magic != magic:
        raise FormatError(f"{path}: not a {kind} file")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[32:]
    if len(body) != rows * cols * 8:
        raise FormatError(f"{path}: expected {rows * cols} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype=_VALUES).reshape(rows, cols).astype(float)


def save_embeddings(path, values) -> None:
    _write(path, EMBEDDING_MAGIC, values)


def load_embeddings(path) -> np.ndarray:
    return _read(path, EMBEDDING_MAGIC, "embedding")


def save_matrix(path, values) -> None:
    _write(path, MATRIX_MAGIC, values)


def load_matrix(path) -> np.ndarray:
    return _read(path, MATRIX_MAGIC, "similarity matrix")
