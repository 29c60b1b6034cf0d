"""Keyframe box annotations and the five-ray visibility test."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset.tokens import generate_token
from .geom import PoseSE3, chain_to_world, quaternion_from_matrix, rotation_from_rpy
from .simworld.lidar import LidarSpec, SemanticScan
from .simworld.raycast import cast_rays
from .simworld.scene import Box, Plane, SceneModel, object_pose_at
from .tags import map_semantic_tag

VISIBILITY_EPS = 0.01  # metres
MOVABLE_KINDS = ("parked_car", "dynamic_car")


@dataclass(frozen=True)
class VisibilityResult:
    visible_count: int
    level: int

    @property
    def token(self) -> str:
        return str(self.level)


@dataclass(frozen=True, eq=False)
class BoxAnnotation:
    center: np.ndarray  # world frame
    size: tuple[float, float, float]  # (w, l, h)
    yaw: float  # degrees
    instance_token: str
    category_name: str
    visibility_token: str
    sample_token: str
    token: str = ""
    object_index: int = -1
    num_lidar_pts: int = 0
    attribute: str = ""
    visibility: VisibilityResult | None = field(default=None, repr=False)

    @property
    def rotation(self) -> np.ndarray:
        """Quaternion (w, x, y, z)."""
        return quaternion_from_matrix(rotation_from_rpy(0.0, 0.0, self.yaw))


def visibility_level(visible_count: int) -> int:
    """{0,1} -> 1, 2 -> 2, 3 -> 3, {4,5} -> 4."""
    if not 0 <= visible_count <= 5:
        raise ValueError("visible_count must lie in 0..5")
    return (1, 1, 2, 3, 4, 4)[visible_count]


def box_from_object(scene: SceneModel, object_index: int, t: float) -> tuple[np.ndarray, tuple[float, float, float], float]:
    """(center, (w, l, h), yaw) where length runs along the object's x axis."""
    obj = scene.get(object_index)
    if isinstance(obj, Plane):
        raise ValueError(f"object {object_index} is a plane and has no box")
    pose = object_pose_at(scene, object_index, t)
    hx, hy, hz = (float(v) for v in obj.half_extents)
    return pose.translation.copy(), (2 * hy, 2 * hx, 2 * hz), pose.yaw


def target_points(box: Box, pose: PoseSE3) -> np.ndarray:
    """Footprint centre and the four footprint edge midpoints, at mid-height."""
    hx, hy, _ = box.half_extents
    local = np.array([[0.0, 0.0, 0.0], [hx, 0.0, 0.0], [-hx, 0.0, 0.0], [0.0, hy, 0.0], [0.0, -hy, 0.0]])
    return pose.apply(local)


def compute_visibility(
    scene: SceneModel,
    ego_pose: PoseSE3,
    target_index: int,
    t: float,
    lidar: LidarSpec | None = None,
) -> VisibilityResult:
    obj = scene.get(target_index)
    if not isinstance(obj, Box):
        raise ValueError(f"object {target_index} is not a box")
    if obj.half_extents[0] <= 0 or obj.half_extents[1] <= 0:
        raise ValueError(f"object {target_index} has a degenerate footprint")
    lidar = lidar or LidarSpec()
    origin = chain_to_world(lidar.mount_pose, ego_pose).apply(np.zeros(3))
    pts = target_points(obj, obj.pose_at(t))
    vec = pts - origin
    dist = np.linalg.norm(vec, axis=1)
    visible = dist <= VISIBILITY_EPS
    far = ~visible
    if far.any():
        dirs = vec[far] / dist[far, None]
        res = cast_rays(scene, origin[None], dirs, float(dist[far].max()) + VISIBILITY_EPS, t)
        hit_target = res["object_index"] == target_index
        reached = res["distance"] >= dist[far] - VISIBILITY_EPS  # includes misses (inf)
        visible[far] = hit_target | reached
    count = int(visible.sum())
    return VisibilityResult(count, visibility_level(count))


def annotate_keyframe(
    scene: SceneModel,
    ego_pose: PoseSE3,
    sample_token: str,
    t: float,
    *,
    instance_key: str = "",
    lidar: LidarSpec | None = None,
    scan: SemanticScan | None = None,
    include_static: bool = False,
) -> list[BoxAnnotation]:
    """One annotation per car (plus pillars when ``include_static``), in index order."""
    kinds = MOVABLE_KINDS + (("pillar",) if include_static else ())
    counts = (
        np.bincount(scan.object_index[scan.object_index >= 0], minlength=max(scene.object_indices) + 1)
        if scan is not None and len(scan)
        else None
    )
    out = []
    for box in scene.boxes_of_kind(*kinds):
        center, size, yaw = box_from_object(scene, box.index, t)
        vis = compute_visibility(scene, ego_pose, box.index, t, lidar)
        if box.kind == "dynamic_car":
            attribute = "vehicle.moving"
        elif box.kind == "parked_car":
            attribute = "vehicle.parked"
        else:
            attribute = ""
        out.append(
            BoxAnnotation(
                center=center,
                size=size,
                yaw=yaw,
                instance_token=generate_token("instance", f"{instance_key}:{box.index}"),
                category_name=map_semantic_tag(box.tag)[1],
                visibility_token=vis.token,
                sample_token=sample_token,
                token=generate_token("sample_annotation", f"{sample_token}:{box.index}"),
                object_index=box.index,
                num_lidar_pts=0 if counts is None else int(counts[box.index]),
                attribute=attribute,
                visibility=vis,
            )
        )
    return out
