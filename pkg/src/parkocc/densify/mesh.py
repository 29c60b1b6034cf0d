"""Triangle meshes and uniform subdivision into evenly spaced vertices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..ply import write_ply_mesh


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, np.float64).reshape(-1, 3)
        f = np.asarray(self.triangles, np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def edge_lengths(self) -> np.ndarray:
        v, f = self.vertices, self.triangles
        return np.stack([np.linalg.norm(v[f[:, (i + 1) % 3]] - v[f[:, i]], axis=1) for i in range(3)], axis=1)

    def without_degenerate(self, eps: float = 1e-12) -> "TriMesh":
        f = self.triangles
        keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
        if len(f):
            keep &= self.triangle_areas() > eps
        return TriMesh(self.vertices, f[keep])

    def save_ply(self, path):
        return write_ply_mesh(path, self.vertices, self.triangles)


def _barycentric_grid(level: int) -> np.ndarray:
    """Barycentric weights (u, v, w) of the points of a triangle split ``level`` times per edge."""
    m = level
    ij = [(i, j) for i in range(m + 1) for j in range(m + 1 - i)]
    uv = np.array(ij, np.float64) / m
    return np.column_stack([1.0 - uv.sum(axis=1), uv[:, 0], uv[:, 1]])


def densify_mesh(mesh: TriMesh, max_edge: float) -> np.ndarray:
    """Vertices of a uniform per-triangle subdivision such that every edge is at
    most ``max_edge``. Original vertices come first; duplicates (within 1e-9) are
    removed keeping first occurrence."""
    if not max_edge > 0:
        raise ValueError("max_edge must be > 0")
    v, f = mesh.vertices, mesh.triangles
    if not len(f):
        return v.copy()
    longest = mesh.edge_lengths().max(axis=1)
    ratio = longest / max_edge
    levels = np.where(ratio <= 1.0, 1, 2 ** np.ceil(np.log2(np.maximum(ratio, 1.0)))).astype(np.int64)
    chunks = [v]
    for level in np.unique(levels):
        if level <= 1:
            continue
        tri = f[levels == level]
        bary = _barycentric_grid(int(level))
        corners = np.stack([v[tri[:, 0]], v[tri[:, 1]], v[tri[:, 2]]], axis=1)  # (T, 3, 3)
        pts = np.einsum("bk,tkd->tbd", bary, corners).reshape(-1, 3)
        chunks.append(pts)
    allp = np.vstack(chunks)
    key = np.round(allp / 1e-9).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    return allp[np.sort(first)]
