"""In-memory scan sequences, for running the GT pipeline without a dataset on disk."""

from __future__ import annotations

from typing import Sequence

from ..geom import FrameId
from ..stitchfuse import FrameInput, KeyFrame, LabeledCloud, ObjectBox
from ..tags import map_tags
from .lidar import LidarSpec, SemanticScan, simulate_scan
from .scene import SceneModel


def scan_cloud(scan: SemanticScan, name: str = "LIDAR_TOP") -> LabeledCloud:
    """Hit points in the sensor frame with nuScenes labels."""
    return LabeledCloud(scan.points, map_tags(scan.semantic_tag), FrameId.sensor(name), (0.0, 0.0, 0.0))


def object_boxes(scene: SceneModel, t: float) -> tuple[ObjectBox, ...]:
    """World-frame boxes of every car at ``t``, keyed by object index, in index order."""
    return tuple(ObjectBox(b.index, b.half_extents, b.pose_at(t)) for b in scene.cars)


def scan_frame(scene: SceneModel, t: float, lidar: LidarSpec | None = None) -> FrameInput:
    lidar = lidar or LidarSpec()
    if scene.ego_trajectory is None:
        raise ValueError("scene has no ego trajectory")
    scan = simulate_scan(scene, scene.ego_trajectory.pose_at(t), lidar, t)
    return FrameInput(scan_cloud(scan, lidar.name), scan.ego_pose, scan.sensor_pose_ego, object_boxes(scene, t))


def scan_sequence(scene: SceneModel, times: Sequence[float], lidar: LidarSpec | None = None) -> list[FrameInput]:
    return [scan_frame(scene, float(t), lidar) for t in times]


def key_of(frame: FrameInput) -> KeyFrame:
    return KeyFrame(frame.ego_pose, frame.sensor_pose, frame.boxes)
