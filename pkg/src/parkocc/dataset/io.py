"""Binary point files (5 x float32 per point) and per-point uint8 label files."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

POINT_DTYPE = np.dtype("<f4")
FIELDS = 5  # x, y, z, intensity, ring
RECORD_BYTES = FIELDS * POINT_DTYPE.itemsize


class TruncatedFileError(ValueError):
    pass


def write_point_bin(points: np.ndarray, path) -> Path:
    arr = np.ascontiguousarray(np.asarray(points).reshape(-1, FIELDS), dtype=POINT_DTYPE)
    path = Path(path)
    path.write_bytes(arr.tobytes())
    return path


def read_point_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % RECORD_BYTES:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes is not a multiple of {RECORD_BYTES}")
    return np.frombuffer(raw, dtype=POINT_DTYPE).reshape(-1, FIELDS).copy()


def point_count(path) -> int:
    size = os.path.getsize(path)
    if size % RECORD_BYTES:
        raise TruncatedFileError(f"{path}: {size} bytes is not a multiple of {RECORD_BYTES}")
    return size // RECORD_BYTES


def write_lidarseg(labels: np.ndarray, path) -> Path:
    lab = np.asarray(labels).reshape(-1)
    if lab.size and (lab.min() < 0 or lab.max() > 255):
        raise ValueError("labels must fit in an unsigned byte")
    path = Path(path)
    path.write_bytes(lab.astype(np.uint8).tobytes())
    return path


def read_lidarseg(path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype=np.uint8).copy()
