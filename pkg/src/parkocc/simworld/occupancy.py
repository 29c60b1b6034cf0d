"""Analytic occupancy: which voxel centres lie inside a scene solid."""

from __future__ import annotations

import numpy as np
from numba import njit

from ..geom import PoseSE3
from ..occgrid.grid import UNOCCUPIED, GridSpec, VoxelGrid
from ..tags import SOURCE_TO_NUSCENES
from .scene import SceneModel

INSIDE_TOL = 1e-6
_NO_KEY = np.iinfo(np.int64).max


@njit(cache=True)
def _occupancy_kernel(
    origin, s, nx, ny, nz, R, T,
    plane_z, plane_below, plane_key, plane_label,
    centers, halves, cos_y, sin_y, box_key, box_label,
    tol, best_key, out_label,
):  # pragma: no cover - compiled
    # Planes touch every voxel.
    for i in range(nx):
        cx = origin[0] + (i + 0.5) * s
        for j in range(ny):
            cy = origin[1] + (j + 0.5) * s
            for k in range(nz):
                cz = origin[2] + (k + 0.5) * s
                wz = R[2, 0] * cx + R[2, 1] * cy + R[2, 2] * cz + T[2]
                for p in range(plane_z.shape[0]):
                    if plane_below[p]:
                        inside = wz <= plane_z[p] + tol
                    else:
                        inside = wz >= plane_z[p] - tol
                    if inside and plane_key[p] < best_key[i, j, k]:
                        best_key[i, j, k] = plane_key[p]
                        out_label[i, j, k] = plane_label[p]
    # Boxes only visit the voxels under their grid-frame bounding box.
    for b in range(centers.shape[0]):
        c = cos_y[b]
        sn = sin_y[b]
        hx, hy, hz = halves[b, 0], halves[b, 1], halves[b, 2]
        lo0 = np.inf
        lo1 = np.inf
        lo2 = np.inf
        hi0 = -np.inf
        hi1 = -np.inf
        hi2 = -np.inf
        for corner in range(8):
            ax = hx if corner & 1 else -hx
            ay = hy if corner & 2 else -hy
            az = hz if corner & 4 else -hz
            wx = centers[b, 0] + c * ax - sn * ay - T[0]
            wy = centers[b, 1] + sn * ax + c * ay - T[1]
            wz = centers[b, 2] + az - T[2]
            # grid frame = R^T (world - T)
            gx = R[0, 0] * wx + R[1, 0] * wy + R[2, 0] * wz
            gy = R[0, 1] * wx + R[1, 1] * wy + R[2, 1] * wz
            gz = R[0, 2] * wx + R[1, 2] * wy + R[2, 2] * wz
            lo0 = min(lo0, gx)
            lo1 = min(lo1, gy)
            lo2 = min(lo2, gz)
            hi0 = max(hi0, gx)
            hi1 = max(hi1, gy)
            hi2 = max(hi2, gz)
        i0 = max(0, int(np.floor((lo0 - origin[0]) / s - 0.5)) - 1)
        j0 = max(0, int(np.floor((lo1 - origin[1]) / s - 0.5)) - 1)
        k0 = max(0, int(np.floor((lo2 - origin[2]) / s - 0.5)) - 1)
        i1 = min(nx, int(np.ceil((hi0 - origin[0]) / s - 0.5)) + 2)
        j1 = min(ny, int(np.ceil((hi1 - origin[1]) / s - 0.5)) + 2)
        k1 = min(nz, int(np.ceil((hi2 - origin[2]) / s - 0.5)) + 2)
        for i in range(i0, i1):
            cx = origin[0] + (i + 0.5) * s
            for j in range(j0, j1):
                cy = origin[1] + (j + 0.5) * s
                for k in range(k0, k1):
                    if box_key[b] >= best_key[i, j, k]:
                        continue
                    cz = origin[2] + (k + 0.5) * s
                    px = R[0, 0] * cx + R[0, 1] * cy + R[0, 2] * cz + T[0] - centers[b, 0]
                    py = R[1, 0] * cx + R[1, 1] * cy + R[1, 2] * cz + T[1] - centers[b, 1]
                    pz = R[2, 0] * cx + R[2, 1] * cy + R[2, 2] * cz + T[2] - centers[b, 2]
                    lx = c * px + sn * py
                    ly = -sn * px + c * py
                    if abs(lx) <= hx + tol and abs(ly) <= hy + tol and abs(pz) <= hz + tol:
                        best_key[i, j, k] = box_key[b]
                        out_label[i, j, k] = box_label[b]


def analytic_occupancy(
    scene: SceneModel,
    grid: GridSpec,
    t: float,
    grid_pose: PoseSE3 | None = None,
) -> VoxelGrid:
    """Voxel occupied iff its centre is inside a solid at time ``t`` (closed sets).

    ``grid_pose`` maps grid coordinates into the world (identity by default).
    Overlaps resolve objects first, then structure, then floor; within a class
    the lowest object index wins.
    """
    grid.validate()
    R = np.eye(3) if grid_pose is None else np.ascontiguousarray(grid_pose.rotation)
    T = np.zeros(3) if grid_pose is None else np.ascontiguousarray(grid_pose.translation)
    planes = scene.plane_arrays()
    boxes = scene.box_arrays(t)
    big = 1 << 32
    plane_key = planes["priority"] * big + planes["index"]
    box_key = boxes["priority"] * big + boxes["index"]
    nx, ny, nz = grid.dims
    best_key = np.full(grid.dims, _NO_KEY, np.int64)
    labels = np.full(grid.dims, UNOCCUPIED, np.uint8)
    _occupancy_kernel(
        np.asarray(grid.origin, np.float64), float(grid.voxel_size), nx, ny, nz, R, T,
        planes["z"], planes["below"], plane_key, SOURCE_TO_NUSCENES[planes["tag"]],
        boxes["centers"], boxes["halves"], boxes["cos"], boxes["sin"], box_key,
        SOURCE_TO_NUSCENES[boxes["tag"]],
        INSIDE_TOL, best_key, labels,
    )
    return VoxelGrid(grid, best_key != _NO_KEY, labels)
