"""Scene geometry dump for inspection."""

from __future__ import annotations

import numpy as np

from ..ply import write_ply_mesh
from .scene import SceneModel

_BOX_FACES = np.array(
    [[0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6], [0, 1, 4], [1, 5, 4],
     [2, 6, 3], [3, 6, 7], [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5]]
)


def scene_to_mesh(scene: SceneModel, t: float = 0.0, plane_margin: float = 5.0):
    """Triangles for every box at time ``t``, plus the planes clipped to the box extent."""
    verts, faces = [], []
    corners = np.array([[(i & 1) * 2 - 1, (i >> 1 & 1) * 2 - 1, (i >> 2 & 1) * 2 - 1] for i in range(8)], float)
    for b in scene.boxes:
        pose = b.pose_at(t)
        local = corners * b.half_extents
        faces.append(_BOX_FACES + sum(len(v) for v in verts))
        verts.append(pose.apply(local))
    if verts:
        allv = np.vstack(verts)
        lo, hi = allv.min(0)[:2] - plane_margin, allv.max(0)[:2] + plane_margin
    else:
        lo, hi = np.array([-plane_margin] * 2), np.array([plane_margin] * 2)
    for p in scene.planes:
        quad = np.array([[lo[0], lo[1], p.z], [hi[0], lo[1], p.z], [lo[0], hi[1], p.z], [hi[0], hi[1], p.z]])
        faces.append(np.array([[0, 1, 2], [1, 3, 2]]) + sum(len(v) for v in verts))
        verts.append(quad)
    return np.vstack(verts), np.vstack(faces)


def export_scene_ply(scene: SceneModel, path, t: float = 0.0):
    v, f = scene_to_mesh(scene, t)
    return write_ply_mesh(path, v, f)
