"""Multi-frame aggregation: split each scan into static and per-object points,
accumulate static points in the world and object points in each object's own
box frame, then fuse everything back into one keyframe's LiDAR frame."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .geom import FrameId, PoseSE3, chain_to_world, pose_compose, pose_inverse
from .tags import NUSCENES_TAGS

BOX_MARGIN = 0.05


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    points: np.ndarray
    labels: np.ndarray
    frame: FrameId | None = None
    origins: np.ndarray | None = None  # per-point sensor position, same frame

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, np.float64).reshape(-1, 3)
        lab = np.asarray(self.labels, np.uint8).reshape(-1)
        if len(pts) != len(lab):
            raise ValueError(f"{len(pts)} points but {len(lab)} labels")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)
        if self.origins is not None:
            org = np.asarray(self.origins, np.float64)
            org = np.broadcast_to(org.reshape(-1, 3), pts.shape).copy() if org.size == 3 else org.reshape(-1, 3)
            if len(org) != len(pts):
                raise ValueError("origins must match points")
            object.__setattr__(self, "origins", org)

    def __len__(self) -> int:
        return len(self.points)

    def check_labels(self) -> None:
        bad = set(np.unique(self.labels).tolist()) - NUSCENES_TAGS
        if bad:
            raise ValueError(f"labels {sorted(bad)} are not nuScenes tags")

    def subset(self, mask: np.ndarray) -> "LabeledCloud":
        return LabeledCloud(
            self.points[mask], self.labels[mask], self.frame,
            None if self.origins is None else self.origins[mask],
        )

    def transformed(self, pose: PoseSE3, frame: FrameId | None = None) -> "LabeledCloud":
        return LabeledCloud(
            pose.apply(self.points), self.labels, frame,
            None if self.origins is None else pose.apply(self.origins),
        )

    @classmethod
    def empty(cls, frame: FrameId | None = None) -> "LabeledCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, np.uint8), frame, np.zeros((0, 3)))

    @classmethod
    def concat(cls, clouds: Sequence["LabeledCloud"], frame: FrameId | None = None) -> "LabeledCloud":
        clouds = [c for c in clouds if len(c)]
        if not clouds:
            return cls.empty(frame)
        with_org = all(c.origins is not None for c in clouds)
        return cls(
            np.vstack([c.points for c in clouds]),
            np.concatenate([c.labels for c in clouds]),
            frame,
            np.vstack([c.origins for c in clouds]) if with_org else None,
        )


@dataclass(frozen=True, eq=False)
class ObjectBox:
    """An object's oriented box at one instant; ``pose`` maps box-local to the
    frame named by the surrounding call (world for aggregation)."""

    key: Hashable
    half_extents: np.ndarray
    pose: PoseSE3

    def local(self, points: np.ndarray, pose: PoseSE3 | None = None) -> np.ndarray:
        return pose_inverse(pose or self.pose).apply(points)


@dataclass(frozen=True, eq=False)
class FrameSegments:
    static_part: LabeledCloud
    dynamic_parts: dict[Hashable, LabeledCloud]
    assignment: np.ndarray  # per input point: -1 static, else position in the box list


@dataclass(frozen=True, eq=False)
class FrameInput:
    """One scan with its poses. ``boxes`` carry world-frame poses at scan time."""

    scan: LabeledCloud  # sensor frame
    ego_pose: PoseSE3
    sensor_pose: PoseSE3  # sensor -> ego
    boxes: tuple[ObjectBox, ...] = ()

    @property
    def sensor_to_world(self) -> PoseSE3:
        return chain_to_world(self.sensor_pose, self.ego_pose)


@dataclass(frozen=True, eq=False)
class AggregatedScene:
    static_world: LabeledCloud
    objects: dict[Hashable, LabeledCloud]
    extents: dict[Hashable, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class KeyFrame:
    ego_pose: PoseSE3
    sensor_pose: PoseSE3
    boxes: tuple[ObjectBox, ...] = ()  # world poses at key time

    @property
    def sensor_to_world(self) -> PoseSE3:
        return chain_to_world(self.sensor_pose, self.ego_pose)


def points_in_box(points: np.ndarray, half_extents: np.ndarray, pose: PoseSE3, margin: float = BOX_MARGIN) -> np.ndarray:
    local = pose_inverse(pose).apply(points)
    return np.all(np.abs(local) <= np.asarray(half_extents) + margin, axis=1)


def split_static_dynamic(
    scan: LabeledCloud,
    boxes: Sequence[ObjectBox],
    margin: float = BOX_MARGIN,
) -> FrameSegments:
    """Assign each point to the first box (in list order) containing it, boundary
    inclusive after inflating by ``margin``; the rest is static. Box poses must be
    in the scan's frame."""
    assign = np.full(len(scan), -1, np.int64)
    free = np.ones(len(scan), bool)
    for b, box in enumerate(boxes):
        if not free.any():
            break
        idx = np.flatnonzero(free)
        inside = points_in_box(scan.points[idx], box.half_extents, box.pose, margin)
        assign[idx[inside]] = b
        free[idx[inside]] = False
    dynamic = {box.key: scan.subset(assign == b) for b, box in enumerate(boxes) if np.any(assign == b)}
    return FrameSegments(scan.subset(assign < 0), dynamic, assign)


def aggregate_sequence(frames: Sequence[FrameInput], margin: float = BOX_MARGIN) -> AggregatedScene:
    if not frames:
        raise ValueError("aggregate_sequence needs at least one frame")
    static: list[LabeledCloud] = []
    objects: dict[Hashable, list[LabeledCloud]] = {}
    extents: dict[Hashable, np.ndarray] = {}
    world = FrameId.world()
    for fr in frames:
        s2w = fr.sensor_to_world
        w2s = pose_inverse(s2w)
        scan = fr.scan
        if scan.origins is None:
            scan = LabeledCloud(scan.points, scan.labels, scan.frame, np.zeros(3))
        for box in fr.boxes:
            if box.pose is None:
                raise ValueError(f"box {box.key!r} has no pose")
        local_boxes = [ObjectBox(b.key, b.half_extents, pose_compose(w2s, b.pose)) for b in fr.boxes]
        seg = split_static_dynamic(scan, local_boxes, margin)
        static.append(seg.static_part.transformed(s2w, world))
        for box in fr.boxes:
            part = seg.dynamic_parts.get(box.key)
            if part is None:
                continue
            to_box = pose_compose(pose_inverse(box.pose), s2w)
            objects.setdefault(box.key, []).append(part.transformed(to_box, FrameId.object(box.key)))
            extents[box.key] = np.asarray(box.half_extents, float)
    return AggregatedScene(
        LabeledCloud.concat(static, world),
        {k: LabeledCloud.concat(v, FrameId.object(k)) for k, v in objects.items()},
        extents,
    )


def fuse_to_frame(agg: AggregatedScene, key: KeyFrame, objects: bool = True) -> LabeledCloud:
    """Static world points and each object's canonical points (placed at its key
    pose) in the key LiDAR frame. Objects without a key-time box are dropped."""
    w2k = pose_inverse(key.sensor_to_world)
    frame = FrameId.keyframe_lidar("key")
    parts = [agg.static_world.transformed(w2k, frame)]
    if objects:
        for box in key.boxes:
            cloud = agg.objects.get(box.key)
            if cloud is None or not len(cloud):
                continue
            parts.append(cloud.transformed(pose_compose(w2k, box.pose), frame))
    return LabeledCloud.concat(parts, frame)
