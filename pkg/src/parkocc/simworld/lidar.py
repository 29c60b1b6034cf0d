"""Spinning semantic LiDAR model."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..geom import FrameId, PoseSE3, chain_to_world, rotation_from_rpy
from .raycast import RayHit, cast_rays
from .scene import SceneModel


@dataclass(frozen=True)
class LidarSpec:
    channels: int = 64
    range: float = 80.0
    horizontal_fov: float = 360.0
    vertical_fov: tuple[float, float] = (-30.0, 10.0)
    azimuth_steps: int = 900
    mount_translation: tuple[float, float, float] = (0.0, 0.0, 2.0)
    # The acquisition table lists a mount yaw of 90 deg; scans here are not yawed by default.
    mount_yaw: float = 0.0
    name: str = "LIDAR_TOP"

    def validate(self) -> None:
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.range <= 0:
            raise ValueError("range must be > 0")
        if self.azimuth_steps < 4:
            raise ValueError("azimuth_steps must be >= 4")
        lo, hi = self.vertical_fov
        if not lo <= hi:
            raise ValueError("vertical_fov must be (low, high) with low <= high")
        if not 0 < self.horizontal_fov <= 360:
            raise ValueError("horizontal_fov must lie in (0, 360]")

    @property
    def mount_pose(self) -> PoseSE3:
        return PoseSE3(
            rotation_from_rpy(0.0, 0.0, self.mount_yaw),
            np.asarray(self.mount_translation, float),
            source=FrameId.sensor(self.name),
            target=FrameId.ego(),
        )

    def elevations(self) -> np.ndarray:
        lo, hi = self.vertical_fov
        if self.channels == 1:
            return np.array([(lo + hi) / 2.0])
        return np.linspace(lo, hi, self.channels)

    def azimuths(self) -> np.ndarray:
        if self.horizontal_fov >= 360.0:
            return np.arange(self.azimuth_steps) * (360.0 / self.azimuth_steps)
        half = self.horizontal_fov / 2.0
        return np.linspace(-half, half, self.azimuth_steps)

    def ray_directions(self) -> np.ndarray:
        """Unit directions in the sensor frame, ordered by (channel, azimuth step)."""
        return _ray_directions(self.channels, self.vertical_fov, self.horizontal_fov, self.azimuth_steps).copy()

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "range": self.range,
            "horizontal_fov": self.horizontal_fov,
            "vertical_fov": list(self.vertical_fov),
            "azimuth_steps": self.azimuth_steps,
            "mount_translation": list(self.mount_translation),
            "mount_yaw": self.mount_yaw,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LidarSpec":
        kw = dict(d)
        for key in ("vertical_fov", "mount_translation"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        return cls(**kw)


@lru_cache(maxsize=8)
def _ray_directions(channels: int, vfov: tuple[float, float], hfov: float, steps: int) -> np.ndarray:
    spec = LidarSpec(channels=channels, vertical_fov=vfov, horizontal_fov=hfov, azimuth_steps=steps)
    el = np.radians(spec.elevations())[:, None]
    az = np.radians(spec.azimuths())[None, :]
    dirs = np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.broadcast_to(np.sin(el), (channels, steps))],
        axis=-1,
    ).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs.setflags(write=False)
    return dirs


@dataclass(frozen=True, eq=False)
class SemanticScan:
    """One sweep. Per-point arrays are ordered by (channel, azimuth index); points
    are in the sensor frame."""

    timestamp: float
    ego_pose: PoseSE3
    sensor_pose_ego: PoseSE3
    sensor_pose_world: PoseSE3
    points: np.ndarray
    distance: np.ndarray
    incidence_cosine: np.ndarray
    object_index: np.ndarray
    semantic_tag: np.ndarray
    channel: np.ndarray
    azimuth_index: np.ndarray
    channels: int = field(default=64)

    def __len__(self) -> int:
        return len(self.distance)

    def hits(self) -> list[RayHit]:
        return [
            RayHit(self.points[i], float(self.distance[i]), float(self.incidence_cosine[i]),
                   int(self.object_index[i]), int(self.semantic_tag[i]))
            for i in range(len(self))
        ]

    def by_channel(self) -> dict[int, np.ndarray]:
        """Point indices grouped by channel."""
        return {int(c): np.flatnonzero(self.channel == c) for c in np.unique(self.channel)}


def simulate_scan(scene: SceneModel, ego_pose: PoseSE3, spec: LidarSpec, t: float) -> SemanticScan:
    spec.validate()
    sensor_ego = spec.mount_pose
    sensor_world = chain_to_world(sensor_ego, ego_pose)
    local_dirs = spec.ray_directions()
    world_dirs = local_dirs @ sensor_world.rotation.T
    origin = sensor_world.apply(np.zeros(3))
    res = cast_rays(scene, origin[None], world_dirs, spec.range, t)
    keep = res["object_index"] >= 0
    dist = res["distance"][keep]
    ids = np.flatnonzero(keep)
    return SemanticScan(
        timestamp=float(t),
        ego_pose=ego_pose,
        sensor_pose_ego=sensor_ego,
        sensor_pose_world=sensor_world,
        points=local_dirs[keep] * dist[:, None],
        distance=dist,
        incidence_cosine=res["incidence_cosine"][keep],
        object_index=res["object_index"][keep],
        semantic_tag=res["tag"][keep],
        channel=(ids // spec.azimuth_steps).astype(np.int64),
        azimuth_index=(ids % spec.azimuth_steps).astype(np.int64),
        channels=spec.channels,
    )
