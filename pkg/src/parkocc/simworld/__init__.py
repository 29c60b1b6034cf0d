"""Analytic parking-lot world: geometry, ray casting, LiDAR and occupancy oracle."""

from .export import export_scene_ply, scene_to_mesh
from .lidar import LidarSpec, SemanticScan, simulate_scan
from .occupancy import analytic_occupancy
from .sequence import key_of, object_boxes, scan_cloud, scan_frame, scan_sequence
from .raycast import RayHit, cast_ray, cast_rays
from .scene import (
    Box,
    Plane,
    SceneConfig,
    SceneInfeasibleError,
    SceneModel,
    Trajectory,
    UnknownObjectError,
    build_occluded_wall,
    build_parking_lot,
    object_pose_at,
)

__all__ = [
    "Box", "Plane", "SceneConfig", "SceneInfeasibleError", "SceneModel", "Trajectory",
    "UnknownObjectError", "build_occluded_wall", "build_parking_lot", "object_pose_at", "RayHit", "cast_ray",
    "cast_rays", "LidarSpec", "SemanticScan", "simulate_scan", "analytic_occupancy",
    "export_scene_ply", "scene_to_mesh", "key_of", "object_boxes", "scan_cloud",
    "scan_frame", "scan_sequence",
]
