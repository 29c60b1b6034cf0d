"""Regular-grid Poisson surface reconstruction.

The indicator function chi (1 inside the solid, 0 outside) lives at cell
centres. Oriented samples are splatted onto a staggered face field ``V`` (the
expected gradient of chi, i.e. ``-n`` per unit area), the normal equations
``-Δ chi = -div V`` are solved by conjugate gradients with zero-flux boundaries,
and the mesh is the marching-cubes iso-surface at the mean of chi over the
samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from skimage.measure import marching_cubes

from .cg import solve_neumann_poisson
from .mesh import TriMesh
from .normals import OrientedPointCloud

MIN_POINTS = 50


class PoissonError(RuntimeError):
    pass


@dataclass(frozen=True)
class PoissonConfig:
    resolution: int = 128  # cells along the longest axis, or per tile when cell_size is set
    cell_size: float | None = None  # fixed cell size (metres); enables tiling
    padding: float = 0.05  # fraction of the bounding-box extent added on each side
    smoothing: float = 1.0  # Gaussian width of the splatted field, in cells (0 = off)
    tol: float = 1e-6
    max_iter: int = 2000
    iso: str = "mean"  # mean indicator at the samples
    trim: float | None = None  # drop triangles farther than this (metres) from every sample
    tile_overlap: float = 2.0
    k_area: int = 8  # neighbours used for the per-sample area estimate

    def validate(self) -> None:
        if self.resolution < 8:
            raise ValueError("resolution must be >= 8")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.cell_size is not None and not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.iso != "mean":
            raise ValueError(f"unknown iso rule {self.iso!r}")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class _Grid:
    origin: np.ndarray  # corner of cell (0, 0, 0)
    h: float
    shape: tuple[int, int, int]


def _trilinear_splat(target: np.ndarray, coords: np.ndarray, values: np.ndarray) -> None:
    """Add ``values`` at fractional index ``coords`` into ``target`` with trilinear weights."""
    base = np.floor(coords).astype(np.int64)
    frac = coords - base
    shape = np.asarray(target.shape)
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                idx = base + (dx, dy, dz)
                ok = np.all((idx >= 0) & (idx < shape), axis=1)
                np.add.at(target, tuple(idx[ok].T), (wx * wy * wz * values)[ok])


def _sample_areas(points: np.ndarray, k: int) -> np.ndarray:
    k = min(k, len(points) - 1)
    d, _ = cKDTree(points).query(points, k=k + 1)
    r = d[:, -1]
    return np.pi * r * r / k


def _solve_indicator(points: np.ndarray, normals: np.ndarray, areas: np.ndarray, grid: _Grid, cfg: PoissonConfig):
    nx, ny, nz = grid.shape
    h = grid.h
    rel = (points - grid.origin) / h  # in cell units, cell centres at i + 0.5
    scale = areas / h**3
    div = np.zeros(grid.shape)
    # Face field along each axis: faces sit at integer positions along that axis.
    for ax in range(3):
        fshape = list(grid.shape)
        fshape[ax] += 1
        face = np.zeros(fshape)
        coords = rel - 0.5
        coords[:, ax] += 0.5
        _trilinear_splat(face, coords, -normals[:, ax] * scale)
        if cfg.smoothing > 0:
            face = ndimage.gaussian_filter(face, cfg.smoothing, mode="constant")
        # Zero flux through the outer boundary.
        sl = [slice(None)] * 3
        sl[ax] = 0
        face[tuple(sl)] = 0.0
        sl[ax] = -1
        face[tuple(sl)] = 0.0
        hi = [slice(None)] * 3
        lo = [slice(None)] * 3
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        div += (face[tuple(hi)] - face[tuple(lo)]) / h
    res = solve_neumann_poisson(-div, h, tol=cfg.tol, max_iter=cfg.max_iter, raise_on_failure=False)
    if not res.converged:
        raise PoissonError(
            f"CG did not converge: relative residual {res.residual:.3e} after {res.iterations} iterations"
        )
    return res.x.reshape(grid.shape), res


def _extract(chi: np.ndarray, points: np.ndarray, grid: _Grid) -> TriMesh:
    rel = (points - grid.origin) / grid.h - 0.5
    samples = ndimage.map_coordinates(chi, rel.T, order=1, mode="nearest")
    iso = float(samples.mean())
    if not (chi.min() < iso < chi.max()):
        raise PoissonError("empty iso-surface")
    try:
        verts, faces, _, _ = marching_cubes(chi, level=iso, spacing=(grid.h,) * 3, allow_degenerate=False)
    except (ValueError, RuntimeError) as exc:
        raise PoissonError(f"empty iso-surface ({exc})") from exc
    verts = verts + grid.origin + 0.5 * grid.h
    return TriMesh(verts, faces).without_degenerate()


def _reconstruct_block(points, normals, areas, lo, hi, h, cfg) -> TriMesh:
    shape = tuple(int(v) for v in np.maximum(np.ceil((hi - lo) / h), 2).astype(int))
    grid = _Grid(lo, h, shape)
    chi, _ = _solve_indicator(points, normals, areas, grid, cfg)
    return _extract(chi, points, grid)


def _trim(mesh: TriMesh, points: np.ndarray, dist: float) -> TriMesh:
    if not len(mesh.triangles):
        return mesh
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    d, _ = cKDTree(points).query(cent, k=1, distance_upper_bound=dist * 1.0001)
    return TriMesh(mesh.vertices, mesh.triangles[np.isfinite(d)])


def _compact(mesh: TriMesh) -> TriMesh:
    used = np.unique(mesh.triangles)
    remap = np.full(len(mesh.vertices), -1, np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(mesh.vertices[used], remap[mesh.triangles])


def poisson_reconstruct(cloud: OrientedPointCloud, cfg: PoissonConfig | None = None) -> TriMesh:
    cfg = cfg or PoissonConfig()
    cfg.validate()
    pts, nrm = cloud.points, cloud.normals
    if len(pts) < MIN_POINTS:
        raise ValueError(f"poisson_reconstruct needs at least {MIN_POINTS} oriented points, got {len(pts)}")
    areas = _sample_areas(pts, cfg.k_area)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = np.maximum(hi - lo, 1e-9)
    pad = cfg.padding * extent.max()
    lo, hi = lo - pad, hi + pad
    if cfg.cell_size is None:
        h = float((hi - lo).max() / cfg.resolution)
        mesh = _reconstruct_block(pts, nrm, areas, lo, hi, h, cfg)
    else:
        mesh = _tiled(pts, nrm, areas, lo, hi, cfg)
    if cfg.trim is not None:
        mesh = _trim(mesh, pts, cfg.trim)
    if not len(mesh.triangles):
        raise PoissonError("empty iso-surface")
    return _compact(mesh)


def _tiled(pts, nrm, areas, lo, hi, cfg: PoissonConfig) -> TriMesh:
    h = float(cfg.cell_size)
    core = cfg.resolution * h
    counts = np.maximum(np.ceil((hi - lo) / core), 1).astype(int)
    ov = cfg.tile_overlap
    verts, faces = [], []
    offset = 0
    for ti in np.ndindex(*counts):
        c_lo = lo + np.asarray(ti) * core
        c_hi = np.minimum(c_lo + core, hi)
        # Outer tile faces stay at the global bounds; inner faces get the overlap.
        t_lo = np.where(np.asarray(ti) > 0, c_lo - ov, lo)
        t_hi = np.where(np.asarray(ti) < counts - 1, c_hi + ov, hi)
        sel = np.all((pts >= t_lo) & (pts <= t_hi), axis=1)
        if sel.sum() < MIN_POINTS:
            continue
        try:
            m = _reconstruct_block(pts[sel], nrm[sel], areas[sel], t_lo, t_hi, h, cfg)
        except PoissonError as exc:
            if "empty" in str(exc):
                continue
            raise
        cent = m.vertices[m.triangles].mean(axis=1)
        upper_closed = np.asarray(ti) == counts - 1
        keep = np.all(cent >= c_lo, axis=1) & np.all((cent < c_hi) | (upper_closed & (cent <= c_hi)), axis=1)
        if not keep.any():
            continue
        verts.append(m.vertices)
        faces.append(m.triangles[keep] + offset)
        offset += len(m.vertices)
    if not faces:
        raise PoissonError("empty iso-surface")
    return TriMesh(np.vstack(verts), np.vstack(faces))
