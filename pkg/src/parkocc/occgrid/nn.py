"""Nearest-semantic-voxel label transfer onto a dense occupancy grid."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .grid import VoxelGrid, check_same_spec

_K = 8


def nearest_voxel(targets: np.ndarray, sources: np.ndarray, k: int = _K) -> np.ndarray:
    """Row in ``sources`` nearest to each row of ``targets`` (integer voxel indices).

    Distances are compared exactly as integer squared distances; ties go to the
    lowest source row. ``sources`` must be in ascending linear-index order for
    that to mean "lowest linear voxel index".
    """
    src = np.asarray(sources, np.int64).reshape(-1, 3)
    dst = np.asarray(targets, np.int64).reshape(-1, 3)
    if not len(src):
        raise ValueError("no source voxels")
    if not len(dst):
        return np.zeros(0, np.int64)
    tree = cKDTree(src)
    k = min(k, len(src))
    _, cand = tree.query(dst, k=k)
    cand = cand.reshape(len(dst), k)
    diff = src[cand] - dst[:, None, :]
    d2 = np.einsum("nkd,nkd->nk", diff, diff)
    best_d2 = d2.min(axis=1)
    masked = np.where(d2 == best_d2[:, None], cand, np.iinfo(np.int64).max)
    best = masked.min(axis=1)
    # If the k-th candidate still ties, more tied voxels may exist outside the candidate list.
    unsure = np.flatnonzero((d2[:, -1] == best_d2) & (k < len(src)))
    for i in unsure:
        r = np.sqrt(best_d2[i]) + 1e-6
        ball = np.asarray(tree.query_ball_point(dst[i], r), np.int64)
        dd = src[ball] - dst[i]
        dd2 = np.einsum("nd,nd->n", dd, dd)
        best[i] = ball[dd2 == best_d2[i]].min()
    return best


def nn_label_transfer(dense: VoxelGrid, semantic: VoxelGrid) -> VoxelGrid:
    """Give every occupied voxel of ``dense`` the label of the nearest occupied
    voxel of ``semantic`` (voxel-centre Euclidean distance, no cap)."""
    check_same_spec(dense, semantic)
    src = semantic.occupied_indices()  # C order = ascending linear index
    if not len(src):
        raise ValueError("semantic grid has no occupied voxel")
    dst = dense.occupied_indices()
    labels = np.full(dense.spec.dims, 255, np.uint8)
    if len(dst):
        rows = nearest_voxel(dst, src)
        labels[tuple(dst.T)] = semantic.labels[tuple(src[rows].T)]
    return VoxelGrid(dense.spec, dense.occupied.copy(), labels)
