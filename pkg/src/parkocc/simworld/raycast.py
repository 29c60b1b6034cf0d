"""Exact ray casting against the analytic scene (planes + yaw-oriented boxes)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .scene import SceneModel

NO_HIT = -1


@dataclass(frozen=True)
class RayHit:
    point: np.ndarray  # same frame as the ray origin
    distance: float
    incidence_cosine: float
    object_index: int
    semantic_tag: int


@njit(cache=True)
def _cast_kernel(
    origins, dirs, max_range,
    centers, halves, cos_y, sin_y, box_index, box_tag,
    plane_z, plane_below, plane_index, plane_tag,
    out_t, out_n, out_index, out_tag,
):  # pragma: no cover - compiled
    n_rays = dirs.shape[0]
    shared_origin = origins.shape[0] == 1
    for r in range(n_rays):
        o = 0 if shared_origin else r
        ox, oy, oz = origins[o, 0], origins[o, 1], origins[o, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best = max_range
        hit = -1
        hit_tag = 0
        nx = 0.0
        ny = 0.0
        nz = 0.0
        for p in range(plane_z.shape[0]):
            z = plane_z[p]
            if plane_below[p]:
                if dz < 0.0 and oz >= z:
                    t = (z - oz) / dz
                    if t < best or (hit < 0 and t <= best):
                        best = t
                        hit = plane_index[p]
                        hit_tag = plane_tag[p]
                        nx, ny, nz = 0.0, 0.0, 1.0
            else:
                if dz > 0.0 and oz <= z:
                    t = (z - oz) / dz
                    if t < best or (hit < 0 and t <= best):
                        best = t
                        hit = plane_index[p]
                        hit_tag = plane_tag[p]
                        nx, ny, nz = 0.0, 0.0, -1.0
        for b in range(centers.shape[0]):
            c = cos_y[b]
            s = sin_y[b]
            px = ox - centers[b, 0]
            py = oy - centers[b, 1]
            lo0 = c * px + s * py
            lo1 = -s * px + c * py
            lo2 = oz - centers[b, 2]
            ld0 = c * dx + s * dy
            ld1 = -s * dx + c * dy
            ld2 = dz
            tnear = -np.inf
            tfar = np.inf
            axis = -1
            sgn = 0.0
            miss = False
            for a in range(3):
                if a == 0:
                    lo, ld = lo0, ld0
                elif a == 1:
                    lo, ld = lo1, ld1
                else:
                    lo, ld = lo2, ld2
                h = halves[b, a]
                if ld == 0.0:
                    if lo < -h or lo > h:
                        miss = True
                        break
                    continue
                t1 = (-h - lo) / ld
                t2 = (h - lo) / ld
                if t1 > t2:
                    t1, t2 = t2, t1
                if t1 > tnear:
                    tnear = t1
                    axis = a
                    sgn = -1.0 if ld > 0.0 else 1.0
                if t2 < tfar:
                    tfar = t2
                if tnear > tfar:
                    miss = True
                    break
            if miss or axis < 0 or tnear < 0.0:
                continue
            if not (tnear < best or (hit < 0 and tnear <= best)):
                continue
            best = tnear
            hit = box_index[b]
            hit_tag = box_tag[b]
            if axis == 0:
                nx, ny, nz = c * sgn, s * sgn, 0.0
            elif axis == 1:
                nx, ny, nz = -s * sgn, c * sgn, 0.0
            else:
                nx, ny, nz = 0.0, 0.0, sgn
        if hit >= 0:
            out_t[r] = best
            out_n[r, 0] = nx
            out_n[r, 1] = ny
            out_n[r, 2] = nz
            out_index[r] = hit
            out_tag[r] = hit_tag
        else:
            out_t[r] = np.inf
            out_index[r] = -1
            out_tag[r] = -1


def cast_rays(
    scene: SceneModel,
    origins: np.ndarray,
    dirs: np.ndarray,
    max_range: float,
    t: float,
) -> dict[str, np.ndarray]:
    """Cast many rays at time ``t``. ``origins`` is (1, 3) or (N, 3); ``dirs`` (N, 3) unit.

    Returns arrays ``distance`` (inf on miss), ``normal``, ``object_index`` (-1 on
    miss), ``tag`` and ``incidence_cosine``.
    """
    origins = np.ascontiguousarray(np.asarray(origins, np.float64).reshape(-1, 3))
    dirs = np.ascontiguousarray(np.asarray(dirs, np.float64).reshape(-1, 3))
    if origins.shape[0] not in (1, dirs.shape[0]):
        raise ValueError("origins must be a single row or one row per ray")
    n = dirs.shape[0]
    boxes = scene.box_arrays(t)
    planes = scene.plane_arrays()
    out_t = np.empty(n)
    out_n = np.zeros((n, 3))
    out_index = np.empty(n, dtype=np.int64)
    out_tag = np.empty(n, dtype=np.int64)
    _cast_kernel(
        origins, dirs, float(max_range),
        boxes["centers"], boxes["halves"], boxes["cos"], boxes["sin"], boxes["index"], boxes["tag"],
        planes["z"], planes["below"], planes["index"], planes["tag"],
        out_t, out_n, out_index, out_tag,
    )
    cosine = np.clip(np.abs(np.einsum("ij,ij->i", dirs, out_n)), 0.0, 1.0)
    return {
        "distance": out_t,
        "normal": out_n,
        "object_index": out_index,
        "tag": out_tag,
        "incidence_cosine": cosine,
    }


def cast_ray(
    scene: SceneModel,
    origin,
    direction,
    max_range: float,
    t: float = 0.0,
) -> RayHit | None:
    """Nearest surface hit along one ray, or ``None`` within ``max_range``."""
    d = np.asarray(direction, np.float64).reshape(3)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    o = np.asarray(origin, np.float64).reshape(3)
    res = cast_rays(scene, o[None], d[None], max_range, t)
    if res["object_index"][0] < 0:
        return None
    dist = float(res["distance"][0])
    return RayHit(
        point=o + dist * d,
        distance=dist,
        incidence_cosine=float(res["incidence_cosine"][0]),
        object_index=int(res["object_index"][0]),
        semantic_tag=int(res["tag"][0]),
    )
