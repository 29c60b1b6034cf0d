"""Voxels crossed by LiDAR rays (Amanatides-Woo traversal)."""

from __future__ import annotations

import numpy as np
from numba import njit

from .grid import GridSpec


@njit(cache=True)
def _traverse(origin, ends, lo, s, dims, mask):  # pragma: no cover - compiled
    nx, ny, nz = dims[0], dims[1], dims[2]
    for r in range(ends.shape[0]):
        p0 = np.empty(3)
        d = np.empty(3)
        for a in range(3):
            p0[a] = (origin[a] - lo[a]) / s
            d[a] = (ends[r, a] - lo[a]) / s - p0[a]
        # Clip the segment to the grid box [0, dims] in cell units.
        t0 = 0.0
        t1 = 1.0
        ok = True
        for a in range(3):
            n = dims[a]
            if d[a] == 0.0:
                if p0[a] < 0.0 or p0[a] >= n:
                    ok = False
                continue
            ta = (0.0 - p0[a]) / d[a]
            tb = (n - p0[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
        if not ok or t0 > t1:
            continue
        cell = np.empty(3, np.int64)
        step = np.empty(3, np.int64)
        tmax = np.empty(3)
        tdelta = np.empty(3)
        last = np.empty(3, np.int64)
        for a in range(3):
            x = p0[a] + t0 * d[a]
            c = int(np.floor(x))
            c = min(max(c, 0), dims[a] - 1)
            cell[a] = c
            xe = p0[a] + t1 * d[a]
            e = int(np.floor(xe))
            last[a] = min(max(e, 0), dims[a] - 1)
            if d[a] > 0.0:
                step[a] = 1
                tmax[a] = (c + 1 - p0[a]) / d[a]
                tdelta[a] = 1.0 / d[a]
            elif d[a] < 0.0:
                step[a] = -1
                tmax[a] = (c - p0[a]) / d[a]
                tdelta[a] = -1.0 / d[a]
            else:
                step[a] = 0
                tmax[a] = np.inf
                tdelta[a] = np.inf
        for _ in range(nx + ny + nz + 3):
            mask[cell[0], cell[1], cell[2]] = True
            if cell[0] == last[0] and cell[1] == last[1] and cell[2] == last[2]:
                break
            a = 0
            if tmax[1] < tmax[a]:
                a = 1
            if tmax[2] < tmax[a]:
                a = 2
            if tmax[a] > t1:
                break
            cell[a] += step[a]
            if cell[a] < 0 or cell[a] >= dims[a]:
                break
            tmax[a] += tdelta[a]


def observed_mask(spec: GridSpec, origin, endpoints: np.ndarray) -> np.ndarray:
    """Boolean grid of voxels touched by any segment ``origin -> endpoint``
    (end voxel included), all in the grid's frame."""
    mask = np.zeros(spec.dims, bool)
    ends = np.ascontiguousarray(np.asarray(endpoints, np.float64).reshape(-1, 3))
    if len(ends):
        _traverse(
            np.asarray(origin, np.float64).reshape(3), ends, np.asarray(spec.origin, np.float64),
            float(spec.voxel_size), np.asarray(spec.dims, np.int64), mask,
        )
    return mask
