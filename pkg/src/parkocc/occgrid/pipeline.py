"""Dense GT assembly: aggregate, densify, voxelize, transfer labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from ..densify.mesh import densify_mesh
from ..densify.normals import estimate_normals
from ..densify.poisson import MIN_POINTS, PoissonConfig, poisson_reconstruct
from ..geom import pose_compose, pose_inverse
from ..stitchfuse import AggregatedScene, FrameInput, KeyFrame, LabeledCloud, aggregate_sequence, fuse_to_frame
from .grid import GridSpec, VoxelGrid, voxelize
from .nn import nn_label_transfer

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class GTConfig:
    normals_k: int = 10
    static_poisson: PoissonConfig = field(
        default_factory=lambda: PoissonConfig(resolution=256, cell_size=0.2, smoothing=0.0, trim=0.4)
    )
    object_poisson: PoissonConfig = field(
        default_factory=lambda: PoissonConfig(resolution=64, cell_size=0.1, smoothing=0.0, trim=0.3)
    )
    max_edge: float | None = None  # defaults to half the voxel size
    keep_samples: bool = True  # voxelize the sparse samples together with the mesh vertices
    crop_margin: float = 2.0  # static points farther than this outside every key grid are not densified

    def to_dict(self) -> dict:
        return {
            "normals_k": self.normals_k,
            "static_poisson": self.static_poisson.to_dict(),
            "object_poisson": self.object_poisson.to_dict(),
            "max_edge": self.max_edge,
            "keep_samples": self.keep_samples,
            "crop_margin": self.crop_margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GTConfig":
        kw = dict(d)
        for key in ("static_poisson", "object_poisson"):
            if key in kw and isinstance(kw[key], dict):
                base = getattr(cls(), key).to_dict()
                base.update(kw[key])
                kw[key] = PoissonConfig(**base)
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class DensifiedScene:
    """Mesh-derived points: static ones in the world, object ones in each object's box frame."""

    static_points: np.ndarray
    object_points: dict[Hashable, np.ndarray]
    skipped: tuple[str, ...] = ()


def densify_cloud(cloud: LabeledCloud, pcfg: PoissonConfig, k: int, max_edge: float) -> np.ndarray:
    """Normals, Poisson mesh and subdivided vertices for one cloud."""
    try:
        oriented = estimate_normals(cloud, k=k)
    except ValueError as exc:
        raise StageError("normals", str(exc)) from exc
    try:
        mesh = poisson_reconstruct(oriented, pcfg)
    except (ValueError, RuntimeError) as exc:
        raise StageError("poisson", str(exc)) from exc
    try:
        return densify_mesh(mesh, max_edge)
    except ValueError as exc:
        raise StageError("densify", str(exc)) from exc


def crop_to_grids(cloud: LabeledCloud, keys: Sequence[KeyFrame], spec: GridSpec, margin: float) -> LabeledCloud:
    """World points inside at least one key grid grown by ``margin``."""
    keep = np.zeros(len(cloud), bool)
    lo = np.asarray(spec.origin) - margin
    hi = np.asarray(spec.upper) + margin
    for key in keys:
        local = pose_inverse(key.sensor_to_world).apply(cloud.points)
        keep |= np.all((local >= lo) & (local <= hi), axis=1)
    return cloud.subset(keep)


def densify_aggregate(
    agg: AggregatedScene,
    spec: GridSpec,
    cfg: GTConfig | None = None,
    keys: Sequence[KeyFrame] | None = None,
) -> DensifiedScene:
    """Reconstruct the static scene once and each object once, in their own frames.

    With ``keys``, the static cloud is first cropped to the key grids. Objects
    with too few points for a reconstruction keep only their samples.
    """
    cfg = cfg or GTConfig()
    max_edge = cfg.max_edge or spec.voxel_size / 2
    static_cloud = agg.static_world if keys is None else crop_to_grids(agg.static_world, keys, spec, cfg.crop_margin)
    if len(static_cloud) < MIN_POINTS:
        raise StageError("poisson", f"static cloud has {len(static_cloud)} points, need {MIN_POINTS}")
    static = densify_cloud(static_cloud, cfg.static_poisson, cfg.normals_k, max_edge)
    objects = {}
    skipped = []
    for key, cloud in agg.objects.items():
        if len(cloud) < max(MIN_POINTS, cfg.normals_k + 1):
            skipped.append(str(key))
            continue
        try:
            objects[key] = densify_cloud(cloud, cfg.object_poisson, cfg.normals_k, max_edge)
        except StageError as exc:
            log.info("object %s: %s; keeping samples only", key, exc)
            skipped.append(str(key))
    return DensifiedScene(static, objects, tuple(skipped))


def gt_from_densified(
    dens: DensifiedScene,
    agg: AggregatedScene,
    key: KeyFrame,
    spec: GridSpec,
    cfg: GTConfig | None = None,
) -> VoxelGrid:
    cfg = cfg or GTConfig()
    sparse = fuse_to_frame(agg, key)
    w2k = pose_inverse(key.sensor_to_world)
    parts = [w2k.apply(dens.static_points)]
    for box in key.boxes:
        pts = dens.object_points.get(box.key)
        if pts is not None and len(pts):
            parts.append(pose_compose(w2k, box.pose).apply(pts))
    if cfg.keep_samples:
        parts.append(sparse.points)
    dense_grid = voxelize(np.vstack(parts), None, spec)
    semantic = voxelize(sparse, None, spec)
    if not semantic.occupied.any():
        raise StageError("label_transfer", "no labeled point falls inside the grid")
    return nn_label_transfer(dense_grid, semantic)


def build_dense_gt(
    frames: Sequence[FrameInput],
    key_index: int,
    spec: GridSpec | None = None,
    cfg: GTConfig | None = None,
    key: KeyFrame | None = None,
) -> VoxelGrid:
    """Dense semantic occupancy for ``frames[key_index]`` in its LiDAR frame."""
    spec = spec or GridSpec()
    cfg = cfg or GTConfig()
    if not 0 <= key_index < len(frames):
        raise IndexError(f"key_index {key_index} outside 0..{len(frames) - 1}")
    try:
        agg = aggregate_sequence(frames)
    except ValueError as exc:
        raise StageError("aggregate", str(exc)) from exc
    kf = frames[key_index]
    key = key or KeyFrame(kf.ego_pose, kf.sensor_pose, kf.boxes)
    dens = densify_aggregate(agg, spec, cfg, keys=[key])
    return gt_from_densified(dens, agg, key, spec, cfg)


def baseline_predict(scan: LabeledCloud, spec: GridSpec | None = None) -> VoxelGrid:
    """Single-scan voxelization; stands in for a learned predictor."""
    return voxelize(scan, None, spec or GridSpec())
