"""Voxel lattice specification, occupancy+label grids and point voxelization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNOCCUPIED = 255  # label value stored where a voxel is empty


class GridSpecMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    # z origin sits half a voxel below -2.0 so the ground plane (2 m below the
    # LiDAR) passes through a layer of voxel centres.
    origin: tuple[float, float, float] = (-25.6, -25.6, -2.1)
    voxel_size: float = 0.2
    dims: tuple[int, int, int] = (256, 256, 32)

    def __post_init__(self) -> None:
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        self.validate()

    def validate(self) -> None:
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be > 0")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("dims must be three integers >= 1")
        if len(self.origin) != 3 or not np.all(np.isfinite(self.origin)):
            raise ValueError("origin must be three finite numbers")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.voxel_size * np.asarray(self.dims)

    def cell_indices(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Integer cell index per point and a mask of points inside the grid.

        Cells are half-open, ``[origin + i*s, origin + (i+1)*s)``.
        """
        pts = np.asarray(points, np.float64).reshape(-1, 3)
        ijk = np.floor((pts - np.asarray(self.origin)) / self.voxel_size)
        inside = np.all((ijk >= 0) & (ijk < np.asarray(self.dims)), axis=1)
        ijk = np.where(inside[:, None], ijk, 0).astype(np.int64)
        return ijk, inside

    def linear_index(self, ijk: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(ijk).T), self.dims)

    def centers_of(self, ijk: np.ndarray) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(ijk, np.float64) + 0.5) * self.voxel_size

    def centers(self) -> np.ndarray:
        """All voxel centres in C order, shape (nx*ny*nz, 3)."""
        ijk = np.indices(self.dims).reshape(3, -1).T
        return self.centers_of(ijk)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "voxel_size": self.voxel_size, "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


@dataclass(eq=False)
class VoxelGrid:
    spec: GridSpec
    occupied: np.ndarray
    labels: np.ndarray = field(default=None)  # uint8, UNOCCUPIED where empty

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.shape != self.spec.dims:
            raise ValueError(f"occupancy shape {occ.shape} does not match dims {self.spec.dims}")
        if self.labels is None:
            labels = np.full(self.spec.dims, UNOCCUPIED, np.uint8)
        else:
            labels = np.asarray(self.labels, dtype=np.uint8)
            if labels.shape != occ.shape:
                raise ValueError("labels and occupancy shapes differ")
            labels = np.where(occ, labels, UNOCCUPIED).astype(np.uint8)
        self.occupied = occ
        self.labels = labels

    @classmethod
    def empty(cls, spec: GridSpec) -> "VoxelGrid":
        return cls(spec, np.zeros(spec.dims, bool))

    @property
    def occupied_count(self) -> int:
        return int(self.occupied.sum())

    def occupied_indices(self) -> np.ndarray:
        return np.argwhere(self.occupied)

    def occupied_centers(self) -> np.ndarray:
        return self.spec.centers_of(self.occupied_indices())

    def label_set(self) -> set[int]:
        return {int(v) for v in np.unique(self.labels[self.occupied])}

    def same_as(self, other: "VoxelGrid") -> bool:
        return (
            self.spec == other.spec
            and np.array_equal(self.occupied, other.occupied)
            and np.array_equal(self.labels, other.labels)
        )


def check_same_spec(a: VoxelGrid, b: VoxelGrid) -> None:
    if a.spec != b.spec:
        raise GridSpecMismatchError(f"grid specs differ: {a.spec} vs {b.spec}")


def voxelize(points, labels=None, spec: GridSpec | None = None) -> VoxelGrid:
    """Occupy every cell holding at least one point; label = majority, ties to the
    lowest tag. ``points`` may be a labeled cloud (anything with ``points`` and
    ``labels`` attributes)."""
    if hasattr(points, "points"):
        if spec is None and isinstance(labels, GridSpec):
            spec, labels = labels, None
        cloud = points
        points, labels = cloud.points, cloud.labels if labels is None else labels
    if spec is None:
        spec = GridSpec()
    pts = np.asarray(points, np.float64).reshape(-1, 3)
    lab = np.zeros(len(pts), np.int64) if labels is None else np.asarray(labels, np.int64).reshape(-1)
    if len(lab) != len(pts):
        raise ValueError("points and labels differ in length")
    ijk, inside = spec.cell_indices(pts)
    grid = VoxelGrid.empty(spec)
    if not inside.any():
        return grid
    lin = spec.linear_index(ijk[inside])
    lab = lab[inside]
    # Count (cell, label) pairs, then keep the best label per cell.
    key = lin * 256 + lab
    uniq, counts = np.unique(key, return_counts=True)
    cells = uniq // 256
    labs = uniq % 256
    order = np.lexsort((labs, -counts, cells))
    cells, labs = cells[order], labs[order]
    first = np.ones(len(cells), bool)
    first[1:] = cells[1:] != cells[:-1]
    occ = grid.occupied.reshape(-1)
    out = grid.labels.reshape(-1)
    occ[cells[first]] = True
    out[cells[first]] = labs[first]
    return grid
