"""Default acquisition rig: six cameras, five radars and the top LiDAR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..simworld.lidar import LidarSpec


@dataclass(frozen=True)
class CameraSpec:
    name: str
    translation: tuple[float, float, float]
    yaw: float
    width: int = 1600
    height: int = 900
    fov: float = 70.0

    @property
    def focal(self) -> float:
        return self.width / (2.0 * math.tan(math.radians(self.fov) / 2.0))

    def intrinsic(self) -> list[list[float]]:
        f = self.focal
        return [[f, 0.0, self.width / 2.0], [0.0, f, self.height / 2.0], [0.0, 0.0, 1.0]]


@dataclass(frozen=True)
class RadarSpec:
    name: str
    translation: tuple[float, float, float]
    yaw: float
    horizontal_fov: float = 80.0
    vertical_fov: float = 30.0


DEFAULT_CAMERAS = (
    CameraSpec("CAM_FRONT", (1.5, 0.0, 2.0), 0.0),
    CameraSpec("CAM_FRONT_RIGHT", (1.5, 0.7, 2.0), 55.0),
    CameraSpec("CAM_FRONT_LEFT", (1.5, -0.7, 2.0), -55.0),
    CameraSpec("CAM_BACK_LEFT", (-0.7, 0.0, 2.0), -110.0),
    CameraSpec("CAM_BACK", (-1.5, 0.0, 2.0), 180.0, fov=110.0),
    CameraSpec("CAM_BACK_RIGHT", (-0.7, 0.0, 2.0), 110.0),
)

DEFAULT_RADARS = (
    RadarSpec("RADAR_FRONT", (1.5, 0.0, 0.5), 0.0),
    RadarSpec("RADAR_FRONT_RIGHT", (1.5, 0.7, 0.5), 90.0),
    RadarSpec("RADAR_FRONT_LEFT", (1.5, -0.7, 0.5), -90.0),
    RadarSpec("RADAR_BACK_LEFT", (-1.5, -0.7, 0.5), 180.0),
    RadarSpec("RADAR_BACK_RIGHT", (-1.5, 0.7, 0.5), 180.0),
)

# Mount yaw listed for LIDAR_TOP in the acquisition table (not applied by default).
TABLE_LIDAR_YAW = 90.0


@dataclass(frozen=True)
class SensorSuite:
    lidar: LidarSpec = field(default_factory=LidarSpec)
    cameras: tuple[CameraSpec, ...] = DEFAULT_CAMERAS
    radars: tuple[RadarSpec, ...] = DEFAULT_RADARS

    def shared_positions(self) -> list[list[str]]:
        """Groups of sensors mounted at exactly the same point."""
        groups: dict[tuple, list[str]] = {}
        for s in (*self.cameras, *self.radars):
            groups.setdefault(tuple(s.translation), []).append(s.name)
        return [names for names in groups.values() if len(names) > 1]

    def channels(self) -> list[tuple[str, str]]:
        return (
            [(self.lidar.name, "lidar")]
            + [(c.name, "camera") for c in self.cameras]
            + [(r.name, "radar") for r in self.radars]
        )
