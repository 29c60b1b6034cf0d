"""Procedural underground parking lot: planes, boxes and trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from ..geom import FrameId, PoseSE3, normalize_angle, rotation_from_rpy

# Source (simulator-style) semantic tags used by the built-in scenes.
TAG_ROAD = 1
TAG_BUILDING = 3
TAG_WALL = 4
TAG_POLE = 6
TAG_CAR = 14

# Label precedence inside solids: objects before structure before floor.
PRIORITY_OBJECT = 0
PRIORITY_STRUCTURE = 1
PRIORITY_FLOOR = 2

_KIND_PRIORITY = {
    "parked_car": PRIORITY_OBJECT,
    "dynamic_car": PRIORITY_OBJECT,
    "object": PRIORITY_OBJECT,
    "wall": PRIORITY_STRUCTURE,
    "pillar": PRIORITY_STRUCTURE,
    "structure": PRIORITY_STRUCTURE,
}


class SceneInfeasibleError(ValueError):
    """The configuration cannot be realised; the message names the constraint."""


class UnknownObjectError(KeyError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    lot_width: float = 40.0  # x extent
    lot_length: float = 60.0  # y extent
    ceiling_height: float = 3.0
    pillar_spacing: float = 8.0
    pillar_cross_section: float = 0.8
    parked_car_density: float = 0.5
    dynamic_car_count: int = 2
    scene_duration: float = 10.0
    fixed_dt: float = 0.05
    wall_thickness: float = 0.4
    car_size: tuple[float, float, float] = (4.4, 2.0, 1.6)  # length, width, height
    ego_speed: float = 2.0
    dynamic_speed_range: tuple[float, float] = (1.0, 3.0)
    # Geometry is snapped to this lattice (0 disables). The ego sensor is put at
    # half-lattice phase at ``ego_phase_time`` so that, with the default voxel
    # grid, lattice-aligned faces pass through voxel centres.
    lattice: float = 0.2
    ego_phase_time: float = 0.45

    def validate(self) -> None:
        if min(self.lot_width, self.lot_length, self.ceiling_height) <= 0:
            raise ValueError("lot dimensions must be > 0")
        if self.pillar_spacing <= self.pillar_cross_section:
            raise ValueError("pillar_spacing must exceed pillar_cross_section")
        if self.pillar_cross_section <= 0:
            raise ValueError("pillar_cross_section must be > 0")
        if self.fixed_dt <= 0:
            raise ValueError("fixed_dt must be > 0")
        if not 0.0 <= self.parked_car_density <= 1.0:
            raise ValueError("parked_car_density must lie in [0, 1]")
        if self.dynamic_car_count < 0:
            raise ValueError("dynamic_car_count must be >= 0")
        if self.scene_duration <= 0:
            raise ValueError("scene_duration must be > 0")
        if self.lattice < 0:
            raise ValueError("lattice must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scene config keys: {sorted(unknown)}")
        kw = dict(data)
        for key in ("car_size", "dynamic_speed_range"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-linear motion: positions interpolate, yaw follows the shortest arc."""

    times: np.ndarray
    positions: np.ndarray
    yaws: np.ndarray  # degrees

    def __post_init__(self) -> None:
        times = np.asarray(self.times, float).reshape(-1)
        pos = np.asarray(self.positions, float).reshape(-1, 3)
        yaws = np.asarray(self.yaws, float).reshape(-1)
        if not (len(times) == len(pos) == len(yaws)) or len(times) == 0:
            raise ValueError("trajectory arrays must be non-empty and of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name, a in (("times", times), ("positions", pos), ("yaws", yaws)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_waypoints(cls, waypoints: Sequence[tuple[float, PoseSE3]]) -> "Trajectory":
        times = [t for t, _ in waypoints]
        pos = [p.translation for _, p in waypoints]
        yaws = [p.yaw for _, p in waypoints]
        return cls(np.array(times), np.array(pos), np.array(yaws))

    @property
    def waypoints(self) -> list[tuple[float, PoseSE3]]:
        return [
            (float(t), PoseSE3.from_rpy(p, yaw=float(y)))
            for t, p, y in zip(self.times, self.positions, self.yaws)
        ]

    def state_at(self, t: float) -> tuple[np.ndarray, float]:
        times = self.times
        if t <= times[0]:
            return self.positions[0].copy(), float(self.yaws[0])
        if t >= times[-1]:
            return self.positions[-1].copy(), float(self.yaws[-1])
        k = int(np.searchsorted(times, t, side="right")) - 1
        a = (t - times[k]) / (times[k + 1] - times[k])
        pos = self.positions[k] + a * (self.positions[k + 1] - self.positions[k])
        dyaw = normalize_angle(self.yaws[k + 1] - self.yaws[k])
        return pos, normalize_angle(self.yaws[k] + a * dyaw)

    def pose_at(self, t: float) -> PoseSE3:
        pos, yaw = self.state_at(t)
        return PoseSE3(rotation_from_rpy(0.0, 0.0, yaw), pos)


@dataclass(frozen=True)
class Plane:
    """Infinite horizontal plane bounding a half-space solid."""

    index: int
    z: float
    solid_below: bool
    tag: int
    name: str = "floor"

    @property
    def priority(self) -> int:
        return PRIORITY_FLOOR if self.solid_below else PRIORITY_STRUCTURE

    @property
    def pose(self) -> PoseSE3:
        return PoseSE3(np.eye(3), (0.0, 0.0, self.z), target=FrameId.world())


@dataclass(frozen=True, eq=False)
class Box:
    """Box with yaw-only orientation; either fixed ``pose`` or a ``trajectory``."""

    index: int
    kind: str
    tag: int
    half_extents: np.ndarray
    pose: PoseSE3 | None = None
    trajectory: Trajectory | None = None

    def __post_init__(self) -> None:
        h = np.asarray(self.half_extents, float).reshape(3)
        h.setflags(write=False)
        object.__setattr__(self, "half_extents", h)
        if (self.pose is None) == (self.trajectory is None):
            raise ValueError("a box needs exactly one of pose or trajectory")

    @property
    def is_dynamic(self) -> bool:
        return self.trajectory is not None

    @property
    def priority(self) -> int:
        return _KIND_PRIORITY.get(self.kind, PRIORITY_OBJECT)

    def pose_at(self, t: float) -> PoseSE3:
        if self.trajectory is not None:
            return self.trajectory.pose_at(t)
        return self.pose

    def aabb(self, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        pose = self.pose_at(t)
        ext = np.abs(pose.rotation) @ self.half_extents
        return pose.translation - ext, pose.translation + ext


@dataclass(frozen=True, eq=False)
class SceneModel:
    planes: tuple[Plane, ...]
    boxes: tuple[Box, ...]
    duration: float
    ego_trajectory: Trajectory | None = None
    config: SceneConfig | None = None
    aisles: tuple[float, ...] = ()
    _by_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        table: dict[int, Plane | Box] = {}
        for obj in (*self.planes, *self.boxes):
            if obj.index in table:
                raise ValueError(f"duplicate object index {obj.index}")
            table[obj.index] = obj
        object.__setattr__(self, "_by_index", table)
        object.__setattr__(self, "boxes", tuple(sorted(self.boxes, key=lambda b: b.index)))

    @classmethod
    def from_objects(
        cls,
        planes: Iterable[Plane] = (),
        boxes: Iterable[Box] = (),
        duration: float = 10.0,
        ego_trajectory: Trajectory | None = None,
    ) -> "SceneModel":
        return cls(tuple(planes), tuple(boxes), duration, ego_trajectory)

    def with_objects(self, planes: Iterable[Plane] | None = None, boxes: Iterable[Box] | None = None) -> "SceneModel":
        return replace(
            self,
            planes=tuple(self.planes if planes is None else planes),
            boxes=tuple(self.boxes if boxes is None else boxes),
            _by_index={},
        )

    @property
    def object_indices(self) -> list[int]:
        return sorted(self._by_index)

    def get(self, index: int) -> Plane | Box:
        try:
            return self._by_index[index]
        except KeyError:
            raise UnknownObjectError(f"no object with index {index}") from None

    def boxes_of_kind(self, *kinds: str) -> list[Box]:
        return [b for b in self.boxes if b.kind in kinds]

    @property
    def cars(self) -> list[Box]:
        return self.boxes_of_kind("parked_car", "dynamic_car")

    def box_arrays(self, t: float) -> dict[str, np.ndarray]:
        """Flat arrays describing every box at time ``t`` (for the compiled kernels)."""
        n = len(self.boxes)
        centers = np.zeros((n, 3))
        halves = np.zeros((n, 3))
        cos_y = np.ones(n)
        sin_y = np.zeros(n)
        for i, b in enumerate(self.boxes):
            pose = b.pose_at(t)
            centers[i] = pose.translation
            halves[i] = b.half_extents
            cos_y[i] = pose.rotation[0, 0]
            sin_y[i] = pose.rotation[1, 0]
        return {
            "centers": centers,
            "halves": halves,
            "cos": cos_y,
            "sin": sin_y,
            "index": np.array([b.index for b in self.boxes], dtype=np.int64),
            "tag": np.array([b.tag for b in self.boxes], dtype=np.int64),
            "priority": np.array([b.priority for b in self.boxes], dtype=np.int64),
        }

    def plane_arrays(self) -> dict[str, np.ndarray]:
        return {
            "z": np.array([p.z for p in self.planes], dtype=np.float64),
            "below": np.array([p.solid_below for p in self.planes], dtype=np.bool_),
            "index": np.array([p.index for p in self.planes], dtype=np.int64),
            "tag": np.array([p.tag for p in self.planes], dtype=np.int64),
            "priority": np.array([p.priority for p in self.planes], dtype=np.int64),
        }


def object_pose_at(scene: SceneModel, object_index: int, t: float) -> PoseSE3:
    obj = scene.get(object_index)
    if t < -1e-9 or t > scene.duration + 1e-9:
        raise ValueError(f"t={t} outside scene duration [0, {scene.duration}]")
    if isinstance(obj, Plane):
        return obj.pose
    return obj.pose_at(t)


def _snap(v: float, lattice: float) -> float:
    if lattice <= 0:
        return v
    return round(v / lattice) * lattice


def _static_box(index: int, kind: str, tag: int, lo: Sequence[float], hi: Sequence[float]) -> Box:
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    return Box(index, kind, tag, (hi - lo) / 2.0, pose=PoseSE3(np.eye(3), (lo + hi) / 2.0))


def _pillar_positions(extent: float, spacing: float) -> list[float]:
    count = int(math.floor(extent / spacing - 1.0 + 1e-9))
    return [k * spacing for k in range(1, max(count, 0) + 1)]


def build_parking_lot(config: SceneConfig) -> SceneModel:
    """Deterministically build a lot: perimeter walls, a pillar grid, stall rows
    of parked cars along the pillar columns, and cars driving along the aisles
    between columns."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    W, L, H = config.lot_width, config.lot_length, config.ceiling_height
    wt = config.wall_thickness
    lat = config.lattice
    car_l, car_w, car_h = config.car_size
    half_car = np.array([car_l / 2, car_w / 2, car_h / 2])

    planes = (
        Plane(0, 0.0, True, TAG_ROAD, "floor"),
        Plane(1, H, False, TAG_BUILDING, "ceiling"),
    )
    boxes: list[Box] = []
    idx = 2
    for lo, hi in (
        ((0.0, 0.0, 0.0), (wt, L, H)),
        ((W - wt, 0.0, 0.0), (W, L, H)),
        ((wt, 0.0, 0.0), (W - wt, wt, H)),
        ((wt, L - wt, 0.0), (W - wt, L, H)),
    ):
        boxes.append(_static_box(idx, "wall", TAG_WALL, lo, hi))
        idx += 1

    xs = _pillar_positions(W, config.pillar_spacing)
    ys = _pillar_positions(L, config.pillar_spacing)
    c2 = config.pillar_cross_section / 2
    for x in xs:
        for y in ys:
            if x - c2 < wt or x + c2 > W - wt or y - c2 < wt or y + c2 > L - wt:
                raise SceneInfeasibleError("pillar_spacing: pillars would intersect the perimeter walls")
            boxes.append(_static_box(idx, "pillar", TAG_POLE, (x - c2, y - c2, 0.0), (x + c2, y + c2, H)))
            idx += 1

    # Stall slots between consecutive pillars of each column, car long axis along x.
    slots: list[tuple[float, float]] = []
    gap = config.pillar_spacing - config.pillar_cross_section
    per_gap = int(math.floor(gap / (car_w + 0.8)))
    for x in xs:
        for y0, y1 in zip(ys[:-1], ys[1:]):
            pitch = gap / per_gap if per_gap else 0.0
            for k in range(per_gap):
                slots.append((x, _snap(y0 + c2 + (k + 0.5) * pitch, lat)))
    if config.parked_car_density > 0 and not slots:
        raise SceneInfeasibleError(
            "parked_car_density: no stall slot fits between pillars (pillar_spacing too small or lot too small)"
        )
    if car_h > H:
        raise SceneInfeasibleError("ceiling_height: cars do not fit under the ceiling")
    n_parked = int(round(config.parked_car_density * len(slots)))
    chosen = sorted(rng.choice(len(slots), size=n_parked, replace=False).tolist()) if n_parked else []
    for k in chosen:
        x, y = slots[k]
        yaw = 0.0 if rng.random() < 0.5 else 180.0
        pose = PoseSE3(rotation_from_rpy(0, 0, yaw), (x, y, car_h / 2))
        boxes.append(Box(idx, "parked_car", TAG_CAR, half_car, pose=pose))
        idx += 1

    # Aisles run along y, midway between pillar columns (and between walls and the outer columns).
    columns = [0.0, *xs, W]
    aisles = []
    for a, b in zip(columns[:-1], columns[1:]):
        centre = _snap((a + b) / 2, lat)
        left = (a + wt) if a == 0.0 else (a + half_car[0])
        right = (b - wt) if b == W else (b - half_car[0])
        if right - left >= car_w + 0.4 and left + half_car[1] <= centre <= right - half_car[1]:
            aisles.append(centre)
    if not aisles:
        raise SceneInfeasibleError("lot_width/pillar_spacing: no aisle wide enough for a car")

    y_min = wt + half_car[0] + 0.5
    y_max = L - wt - half_car[0] - 0.5
    T = config.scene_duration
    ego_aisle = aisles[int(rng.integers(len(aisles)))]
    ego = _ego_trajectory(config, rng, ego_aisle, y_min, y_max)

    lanes: dict[float, list[Trajectory]] = {ego_aisle: [ego]}
    free_aisles = [a for a in aisles if a != ego_aisle] or list(aisles)
    lo_v, hi_v = config.dynamic_speed_range
    for n in range(config.dynamic_car_count):
        for _attempt in range(100):
            aisle = free_aisles[int(rng.integers(len(free_aisles)))]
            speed = float(rng.uniform(lo_v, hi_v))
            sign = 1.0 if rng.random() < 0.5 else -1.0
            travel = speed * T
            if travel > y_max - y_min:
                continue
            start = float(rng.uniform(y_min, y_max - travel))
            if sign < 0:
                start += travel
            traj = Trajectory(
                np.array([0.0, T]),
                np.array([[aisle, start, car_h / 2], [aisle, start + sign * travel, car_h / 2]]),
                np.array([90.0 * sign, 90.0 * sign]),
            )
            if not any(_trajectories_clash(traj, other, car_l + 0.5, T, config.fixed_dt) for other in lanes.get(aisle, [])):
                lanes.setdefault(aisle, []).append(traj)
                boxes.append(Box(idx, "dynamic_car", TAG_CAR, half_car, trajectory=traj))
                idx += 1
                break
        else:
            raise SceneInfeasibleError(
                f"dynamic_car_count: could not place dynamic car {n} without overlap after 100 retries"
            )

    scene = SceneModel(planes, tuple(boxes), T, ego, config, tuple(aisles))
    _check_static_overlap(scene)
    return scene


def _ego_trajectory(config: SceneConfig, rng: np.random.Generator, aisle: float, y_min: float, y_max: float) -> Trajectory:
    T = config.scene_duration
    v = config.ego_speed
    travel = v * T
    if travel > y_max - y_min:
        raise SceneInfeasibleError("scene_duration * ego_speed exceeds the usable aisle length")
    sign = 1.0 if rng.random() < 0.5 else -1.0
    start = float(rng.uniform(y_min, y_max - travel))
    if sign < 0:
        start += travel
    lat = config.lattice
    x = aisle
    if lat > 0:
        x = aisle + lat / 2
        # Shift the start so that the sensor sits at half-lattice phase at ego_phase_time.
        y_p = start + sign * v * config.ego_phase_time
        y_p_snapped = math.floor((y_p - lat / 2) / lat) * lat + lat / 2
        start += y_p_snapped - y_p
        end = start + sign * travel
        while min(start, end) < y_min:
            start += lat
            end += lat
        while max(start, end) > y_max:
            start -= lat
            end -= lat
    yaw = 90.0 * sign
    return Trajectory(
        np.array([0.0, T]),
        np.array([[x, start, 0.0], [x, start + sign * travel, 0.0]]),
        np.array([yaw, yaw]),
    )


def _trajectories_clash(a: Trajectory, b: Trajectory, min_gap: float, duration: float, dt: float) -> bool:
    for t in np.arange(0.0, duration + dt, dt):
        pa, _ = a.state_at(t)
        pb, _ = b.state_at(t)
        if abs(pa[1] - pb[1]) < min_gap:
            return True
    return False


def _check_static_overlap(scene: SceneModel) -> None:
    static = [b for b in scene.boxes if not b.is_dynamic]
    los = np.array([b.aabb()[0] for b in static])
    his = np.array([b.aabb()[1] for b in static])
    for i in range(len(static)):
        ov = np.minimum(his[i], his[i + 1 :]) - np.maximum(los[i], los[i + 1 :])
        vol = np.prod(np.clip(ov, 0.0, None), axis=1)
        if np.any(vol > 1e-12):
            j = i + 1 + int(np.argmax(vol > 1e-12))
            raise SceneInfeasibleError(
                f"static boxes {static[i].index} ({static[i].kind}) and {static[j].index} ({static[j].kind}) overlap"
            )


def build_occluded_wall(
    duration: float = 10.0,
    wall_distance: float = 8.0,
    occluder_distance: float = 4.0,
    occluder_width: float = 1.0,
    occluder_spacing: float = 2.0,
    half_length: float = 20.0,
    height: float = 3.0,
    speed: float = 2.0,
) -> SceneModel:
    """A floor, one long wall beside the ego path and a row of posts between them.

    The ego drives along +x at y = 0.1 so that the sensor sits at half-lattice
    phase at t = 0.45 + 0.5k. Each post shadows a stripe of the wall that moves
    as the ego passes, so a single scan sees only part of the wall while the
    sequence sees all of it.
    """
    if not 0 < occluder_distance < wall_distance:
        raise SceneInfeasibleError("occluder_distance must lie between the ego path and the wall")
    if not 0 < occluder_width < occluder_spacing:
        raise SceneInfeasibleError("occluder_width must be positive and below occluder_spacing")
    planes = (Plane(0, 0.0, True, TAG_ROAD, "floor"),)
    boxes = [_static_box(1, "wall", TAG_WALL, (-half_length, wall_distance, 0.0), (half_length, wall_distance + 0.4, height))]
    idx = 2
    n = int(math.floor(2 * half_length / occluder_spacing))
    for k in range(n):
        cx = -half_length + (k + 0.5) * occluder_spacing
        lo = _snap(cx - occluder_width / 2, 0.2)
        boxes.append(_static_box(
            idx, "pillar", TAG_POLE,
            (lo, occluder_distance, 0.0), (lo + _snap(occluder_width, 0.2), occluder_distance + 0.4, height),
        ))
        idx += 1
    start = -3.9 - speed * 0.45  # x = -3.9 at t = 0.45
    ego = Trajectory(
        np.array([0.0, duration]),
        np.array([[start, 0.1, 0.0], [start + speed * duration, 0.1, 0.0]]),
        np.array([0.0, 0.0]),
    )
    return SceneModel(planes, tuple(boxes), duration, ego)
