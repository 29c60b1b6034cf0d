"""k-NN PCA normals oriented toward the sensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True, eq=False)
class OrientedPointCloud:
    points: np.ndarray
    normals: np.ndarray
    confidence: np.ndarray | None = None  # 0 for rank-deficient neighbourhoods

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, np.float64).reshape(-1, 3)
        if len(pts) != len(nrm):
            raise ValueError("points and normals differ in length")
        norms = np.linalg.norm(nrm, axis=1)
        if len(nrm) and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("normals must be unit length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.points)


def estimate_normals(
    cloud,
    k: int = 10,
    sensor_origin=None,
    chunk: int = 200_000,
) -> OrientedPointCloud:
    """Normal = eigenvector of the smallest eigenvalue of the covariance of each
    point and its ``k`` nearest neighbours, flipped so that ``n . (o - p) >= 0``.

    ``cloud`` is an (N, 3) array or a labeled cloud; the orientation reference is
    ``sensor_origin`` if given, else the cloud's per-point ``origins``.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    origins = None
    if hasattr(cloud, "points"):
        origins = getattr(cloud, "origins", None)
        pts = np.asarray(cloud.points, np.float64)
    else:
        pts = np.asarray(cloud, np.float64).reshape(-1, 3)
    n = len(pts)
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} points, got {n}")
    if sensor_origin is not None:
        origins = np.broadcast_to(np.asarray(sensor_origin, np.float64).reshape(1, 3), pts.shape)
    tree = cKDTree(pts)
    normals = np.empty_like(pts)
    conf = np.empty(n)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        _, idx = tree.query(pts[s:e], k=k + 1)
        nb = pts[idx]
        nb = nb - nb.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", nb, nb) / (k + 1)
        w, v = np.linalg.eigh(cov)
        normals[s:e] = v[:, :, 0]
        scale = np.maximum(w[:, 2], 1e-300)
        c = (w[:, 1] - w[:, 0]) / scale
        # Collinear neighbourhoods: the two smallest eigenvalues vanish together.
        c[w[:, 1] <= 1e-12 * np.maximum(w[:, 2], 1e-300)] = 0.0
        c[w[:, 2] <= 0] = 0.0
        conf[s:e] = c
    if origins is not None:
        flip = np.einsum("ij,ij->i", normals, origins - pts) < 0
        normals[flip] *= -1
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return OrientedPointCloud(pts, normals, conf)
