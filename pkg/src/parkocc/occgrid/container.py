"""Little-endian GT container: header, run-length occupancy, label stream.

Layout::

    magic    4s   b"POCC"
    version  u16  1
    flags    u16  0
    origin   3 x f64
    voxel    f64
    dims     3 x u32            (nx, ny, nz)
    first    u8                 occupancy value of the first run
    n_runs   u64
    runs     n_runs x u32       run lengths over the C-order (x, y, z) flattening
    n_occ    u64
    labels   n_occ x u8         label of each occupied voxel, same order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..ply import colors_for, write_ply_points
from .grid import GridSpec, VoxelGrid

MAGIC = b"POCC"
VERSION = 1
_HEADER = struct.Struct("<4sHH3dd3I")


class MalformedGridError(ValueError):
    pass


def _runs(flat: np.ndarray) -> tuple[int, np.ndarray]:
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return int(flat[0]), np.diff(bounds).astype("<u4")


def encode_grid(grid: VoxelGrid) -> bytes:
    s = grid.spec
    flat = grid.occupied.reshape(-1).astype(np.uint8)
    first, runs = _runs(flat)
    labels = grid.labels.reshape(-1)[flat.astype(bool)].astype(np.uint8)
    return b"".join([
        _HEADER.pack(MAGIC, VERSION, 0, *s.origin, s.voxel_size, *s.dims),
        struct.pack("<BQ", first, len(runs)),
        runs.tobytes(),
        struct.pack("<Q", len(labels)),
        labels.tobytes(),
    ])


def decode_grid(data: bytes) -> VoxelGrid:
    try:
        magic, version, _flags, ox, oy, oz, vs, nx, ny, nz = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise MalformedGridError("bad magic")
        if version != VERSION:
            raise MalformedGridError(f"unsupported version {version}")
        spec = GridSpec((ox, oy, oz), vs, (nx, ny, nz))
        pos = _HEADER.size
        first, n_runs = struct.unpack_from("<BQ", data, pos)
        pos += 9
        runs = np.frombuffer(data, "<u4", count=n_runs, offset=pos)
        pos += 4 * n_runs
        (n_occ,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        labels = np.frombuffer(data, np.uint8, count=n_occ, offset=pos)
        pos += n_occ
    except (struct.error, ValueError) as exc:
        if isinstance(exc, MalformedGridError):
            raise
        raise MalformedGridError(f"truncated or invalid container: {exc}") from exc
    if pos != len(data):
        raise MalformedGridError(f"{len(data) - pos} trailing bytes")
    if first not in (0, 1) or int(runs.sum(dtype=np.int64)) != spec.size or np.any(runs == 0):
        raise MalformedGridError("occupancy runs do not cover the grid")
    values = (np.arange(len(runs)) + first) % 2
    flat = np.repeat(values.astype(bool), runs.astype(np.int64))
    if int(flat.sum()) != n_occ:
        raise MalformedGridError("label count differs from occupied voxel count")
    lab = np.full(spec.size, 255, np.uint8)
    lab[flat] = labels
    return VoxelGrid(spec, flat.reshape(spec.dims), lab.reshape(spec.dims))


def save_grid(grid: VoxelGrid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_grid(grid))
    return path


def load_grid(path) -> VoxelGrid:
    return decode_grid(Path(path).read_bytes())


def export_grid_ply(grid: VoxelGrid, path) -> Path:
    """One coloured vertex per occupied voxel centre."""
    idx = grid.occupied_indices()
    return write_ply_points(path, grid.spec.centers_of(idx), colors_for(grid.labels[tuple(idx.T)]))
