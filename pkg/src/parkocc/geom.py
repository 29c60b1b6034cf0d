"""Rotations, rigid transforms and the sensor -> ego -> world chain.

Convention: x forward, y right, z up (left-handed, as in the simulator the
data comes from). Positive yaw turns +x toward +y. Angles are degrees at the
API boundary and radians internally.

The rotation built from (roll, pitch, yaw) is ``Rx(roll) @ Ry(pitch) @ Rz(yaw)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "FrameId",
    "PoseSE3",
    "FrameMismatchError",
    "normalize_angle",
    "rotation_from_rpy",
    "yaw_from_rotation",
    "pose_compose",
    "pose_inverse",
    "transform_points",
    "chain_to_world",
    "quaternion_from_matrix",
    "matrix_from_quaternion",
]


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FrameId:
    kind: str  # "sensor" | "ego" | "world" | "keyframe_lidar" | "object"
    name: str = ""

    @classmethod
    def sensor(cls, name: str) -> "FrameId":
        return cls("sensor", name)

    @classmethod
    def ego(cls) -> "FrameId":
        return cls("ego")

    @classmethod
    def world(cls) -> "FrameId":
        return cls("world")

    @classmethod
    def keyframe_lidar(cls, sample_token: str) -> "FrameId":
        return cls("keyframe_lidar", sample_token)

    @classmethod
    def object(cls, object_id: object) -> "FrameId":
        return cls("object", str(object_id))

    def __str__(self) -> str:
        return f"{self.kind}:{self.name}" if self.name else self.kind


def normalize_angle(deg: float) -> float:
    """Wrap an angle in degrees to [-180, 180]."""
    wrapped = math.fmod(deg + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix for roll/pitch/yaw given in degrees."""
    r = math.radians(normalize_angle(roll))
    p = math.radians(normalize_angle(pitch))
    y = math.radians(normalize_angle(yaw))
    return _rx(r) @ _ry(p) @ _rz(y)


def yaw_from_rotation(rotation: np.ndarray) -> float:
    """Heading in degrees of a rotation that only turns about z."""
    return math.degrees(math.atan2(rotation[1, 0], rotation[0, 0]))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PoseSE3:
    """Rigid transform ``p -> R p + t`` from ``source`` into ``target`` coordinates.

    Poses produced by composition remember their factors so that applying a
    composite evaluates the factors one after another; this keeps
    ``chain_to_world(a, b)(p)`` bit-identical to ``b(a(p))``.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    source: FrameId | None = None
    target: FrameId | None = None
    factors: tuple["PoseSE3", ...] = ()

    def __post_init__(self) -> None:
        rot = _readonly(self.rotation)
        trans = _readonly(self.translation).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("pose has non-finite components")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls, source: FrameId | None = None, target: FrameId | None = None) -> "PoseSE3":
        return cls(np.eye(3), np.zeros(3), source, target)

    @classmethod
    def from_rpy(
        cls,
        translation: Sequence[float] = (0.0, 0.0, 0.0),
        roll: float = 0.0,
        pitch: float = 0.0,
        yaw: float = 0.0,
        source: FrameId | None = None,
        target: FrameId | None = None,
    ) -> "PoseSE3":
        return cls(rotation_from_rpy(roll, pitch, yaw), np.asarray(translation, float), source, target)

    @classmethod
    def from_quaternion(cls, translation: Sequence[float], quaternion: Sequence[float], **frames) -> "PoseSE3":
        return cls(matrix_from_quaternion(quaternion), np.asarray(translation, float), **frames)

    @property
    def yaw(self) -> float:
        return yaw_from_rotation(self.rotation)

    @property
    def quaternion(self) -> np.ndarray:
        return quaternion_from_matrix(self.rotation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        return transform_points(self, points)

    def inverse(self) -> "PoseSE3":
        return pose_inverse(self)

    def __matmul__(self, other: "PoseSE3") -> "PoseSE3":
        return pose_compose(self, other)

    def almost_equal(self, other: "PoseSE3", tol: float = 1e-9) -> bool:
        return bool(
            np.max(np.abs(self.rotation - other.rotation)) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )

    def __repr__(self) -> str:
        t = ", ".join(f"{v:.4f}" for v in self.translation)
        return f"PoseSE3(t=({t}), yaw={self.yaw:.3f}, {self.source}->{self.target})"


def _leaf_factors(p: PoseSE3) -> tuple[PoseSE3, ...]:
    return p.factors if p.factors else (p,)


def pose_compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Return ``a ∘ b``: first apply ``b``, then ``a``."""
    if a.source is not None and b.target is not None and a.source != b.target:
        raise FrameMismatchError(f"cannot compose {a.source}->{a.target} after {b.source}->{b.target}")
    rotation = a.rotation @ b.rotation
    translation = a.rotation @ b.translation + a.translation
    return PoseSE3(
        rotation,
        translation,
        source=b.source,
        target=a.target,
        factors=_leaf_factors(b) + _leaf_factors(a),
    )


def pose_inverse(p: PoseSE3) -> PoseSE3:
    rt = p.rotation.T
    return PoseSE3(rt, -(rt @ p.translation), source=p.target, target=p.source)


def transform_points(p: PoseSE3, pts: np.ndarray | Iterable[Sequence[float]]) -> np.ndarray:
    """Apply ``R @ x + t`` to every row of an (N, 3) array."""
    arr = np.asarray(pts, dtype=np.float64)
    single = arr.ndim == 1
    arr = arr.reshape(-1, 3)
    for f in _leaf_factors(p):
        arr = arr @ f.rotation.T + f.translation
    return arr[0] if single else arr


def chain_to_world(sensor_pose_in_ego: PoseSE3, ego_pose_in_world: PoseSE3) -> PoseSE3:
    """Sensor -> world, going through the ego frame (there is no direct path)."""
    return pose_compose(ego_pose_in_world, sensor_pose_in_ego)


def quaternion_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 for a rotation matrix."""
    m = np.asarray(r, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def matrix_from_quaternion(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = (float(v) for v in q)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
