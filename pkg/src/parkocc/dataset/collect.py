"""Drive the simulator through each scene and write the relational dataset."""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image

from ..annotate import annotate_keyframe
from ..geom import quaternion_from_matrix, rotation_from_rpy
from ..simworld.lidar import LidarSpec, simulate_scan
from ..simworld.scene import SceneModel
from ..tags import categories, map_semantic_tag, map_tags
from .db import RelationalDB
from .io import write_lidarseg, write_point_bin
from .sensors import TABLE_LIDAR_YAW, SensorSuite
from .tokens import generate_token

log = logging.getLogger(__name__)

VERSION = "v1.0-trainval"
LAYOUT_VERSION = 1
LAYOUT_DIRS = ("maps", "samples", "sweeps", VERSION, "lidarseg")

VISIBILITY_LEVELS = (
    ("1", "v0-40", "visibility of whole object is between 0 and 40%"),
    ("2", "v40-60", "visibility of whole object is between 40 and 60%"),
    ("3", "v60-80", "visibility of whole object is between 60 and 80%"),
    ("4", "v80-100", "visibility of whole object is between 80 and 100%"),
)
ATTRIBUTES = (
    ("vehicle.moving", "Vehicle is moving."),
    ("vehicle.parked", "Vehicle is parked."),
)


class CollectError(RuntimeError):
    pass


@dataclass(frozen=True)
class CollectConfig:
    keyframe_interval: float = 0.5
    fixed_dt: float = 0.05
    scene_count: int = 3
    frames_per_scene: int = 200
    sensors: SensorSuite = field(default_factory=SensorSuite)
    annotate_static: bool = False

    @property
    def keyframe_ratio(self) -> int:
        return int(round(self.keyframe_interval / self.fixed_dt))

    def validate(self) -> None:
        if self.fixed_dt <= 0 or self.keyframe_interval <= 0:
            raise ValueError("fixed_dt and keyframe_interval must be > 0")
        ratio = self.keyframe_interval / self.fixed_dt
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ValueError("keyframe_interval must be an integer multiple of fixed_dt")
        if self.scene_count < 1:
            raise ValueError("scene_count must be >= 1")
        if self.frames_per_scene < self.keyframe_ratio:
            raise ValueError(
                f"zero keyframes: frames_per_scene={self.frames_per_scene} is below one keyframe interval "
                f"({self.keyframe_ratio} frames)"
            )
        self.sensors.lidar.validate()

    def to_dict(self) -> dict:
        return {
            "keyframe_interval": self.keyframe_interval,
            "fixed_dt": self.fixed_dt,
            "scene_count": self.scene_count,
            "frames_per_scene": self.frames_per_scene,
            "lidar": self.sensors.lidar.to_dict(),
            "annotate_static": self.annotate_static,
        }


def is_keyframe(frame_index: int, cfg: CollectConfig) -> bool:
    return (frame_index + 1) % cfg.keyframe_ratio == 0


def frame_timestamp(scene_index: int, frame_index: int, cfg: CollectConfig) -> int:
    """Microseconds on a run-wide frame counter."""
    return int(round((scene_index * cfg.frames_per_scene + frame_index) * cfg.fixed_dt * 1e6))


def scene_name(scene_index: int) -> str:
    return f"scene-{scene_index + 1:04d}"


def _quat(yaw: float) -> list[float]:
    return [float(v) for v in quaternion_from_matrix(rotation_from_rpy(0.0, 0.0, yaw))]


def _pose_quat(rotation: np.ndarray) -> list[float]:
    return [float(v) for v in quaternion_from_matrix(rotation)]


def _render_map(scene: SceneModel, path: Path, resolution: float = 0.1) -> None:
    """Top-down raster: structure footprints dark, free floor white."""
    cfg = scene.config
    if cfg is not None:
        w, l = cfg.lot_width, cfg.lot_length
    else:
        his = np.array([b.aabb()[1] for b in scene.boxes if not b.is_dynamic] or [[10.0, 10.0, 0.0]])
        w, l = float(his[:, 0].max()), float(his[:, 1].max())
    nx, ny = int(np.ceil(w / resolution)), int(np.ceil(l / resolution))
    img = np.full((ny, nx), 255, np.uint8)
    xs = (np.arange(nx) + 0.5) * resolution
    ys = (np.arange(ny) + 0.5) * resolution
    for b in scene.boxes:
        if b.is_dynamic or b.kind not in ("wall", "pillar"):
            continue
        lo, hi = b.aabb()
        ix = (xs >= lo[0]) & (xs <= hi[0])
        iy = (ys >= lo[1]) & (ys <= hi[1])
        img[np.ix_(iy, ix)] = 0
    Image.fromarray(img[::-1]).save(path, format="PNG")


@dataclass
class CollectResult:
    db: RelationalDB
    root: Path
    keyframes: int = 0
    sweeps: int = 0


def collect_run(
    scenes: SceneModel | Sequence[SceneModel],
    cfg: CollectConfig,
    out_dir,
    *,
    overwrite: bool = False,
    progress: Callable[[str], None] | None = None,
) -> CollectResult:
    """Simulate every frame of every scene and write the dataset tree under ``out_dir``."""
    cfg.validate()
    scenes = [scenes] if isinstance(scenes, SceneModel) else list(scenes)
    root = Path(out_dir)
    if root.exists() and any(root.iterdir()):
        if not overwrite:
            raise CollectError(f"{root} is not empty (use overwrite)")
        for name in (*LAYOUT_DIRS, "manifest.json"):
            target = root / name
            if target.is_dir():
                shutil.rmtree(target)
            elif target.exists():
                target.unlink()
    try:
        for d in ("maps", "samples/LIDAR_TOP", "sweeps/LIDAR_TOP", VERSION, f"lidarseg/{VERSION}"):
            (root / d).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CollectError(f"cannot create dataset directories under {root}: {exc}") from exc

    suite = cfg.sensors
    lidar: LidarSpec = suite.lidar
    db = RelationalDB()
    for channel, modality in suite.channels():
        db.insert("sensor", {"token": generate_token("sensor", channel), "channel": channel, "modality": modality})
    for tag, name in categories():
        db.insert("category", {"token": generate_token("category", str(tag)), "name": name, "description": "", "index": tag})
    for name, desc in ATTRIBUTES:
        db.insert("attribute", {"token": generate_token("attribute", name), "name": name, "description": desc})
    for tok, level, desc in VISIBILITY_LEVELS:
        db.insert("visibility", {"token": tok, "level": level, "description": desc})

    result = CollectResult(db, root)
    manifest_scenes = []
    for si, scene in enumerate(scenes):
        name = scene_name(si)
        if progress:
            progress(f"{name}: collecting {cfg.frames_per_scene} frames")
        _collect_scene(db, result, si, name, scene, cfg, lidar, suite, root, progress)
        manifest_scenes.append({
            "name": name,
            "token": generate_token("scene", name),
            "config": scene.config.to_dict() if scene.config is not None else None,
        })

    db.save(root / VERSION)
    manifest = {
        "layout_version": LAYOUT_VERSION,
        "version": VERSION,
        "collect": cfg.to_dict(),
        "scenes": manifest_scenes,
        "convention": {
            "axes": "x forward, y right, z up (left-handed)",
            "angles": "degrees",
            "rotation": "Rx(roll) @ Ry(pitch) @ Rz(yaw)",
            "quaternion": "w, x, y, z",
        },
        "point_format": {
            "fields": ["x", "y", "z", "intensity", "ring"],
            "dtype": "float32 little-endian",
            "intensity": "255 * incidence cosine",
            "ring": "LiDAR channel index",
            "frame": "LIDAR_TOP sensor frame",
        },
        "lidarseg_format": "uint8 nuScenes tag per point, same order as the point file",
        "notes": {
            "shared_sensor_positions": suite.shared_positions(),
            "lidar_table_yaw": TABLE_LIDAR_YAW,
            "lidar_mount_yaw_applied": lidar.mount_yaw,
        },
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return result


def _calibration_rows(db: RelationalDB, name: str, lidar: LidarSpec, suite: SensorSuite) -> dict[str, str]:
    tokens = {}
    mount = lidar.mount_pose
    entries = [(lidar.name, list(map(float, mount.translation)), _pose_quat(mount.rotation), [])]
    for cam in suite.cameras:
        entries.append((cam.name, list(cam.translation), _quat(cam.yaw), cam.intrinsic()))
    for radar in suite.radars:
        entries.append((radar.name, list(radar.translation), _quat(radar.yaw), []))
    for channel, translation, rotation, intrinsic in entries:
        tok = generate_token("calibrated_sensor", f"{name}:{channel}")
        db.insert("calibrated_sensor", {
            "token": tok,
            "sensor_token": generate_token("sensor", channel),
            "translation": translation,
            "rotation": rotation,
            "camera_intrinsic": intrinsic,
        })
        tokens[channel] = tok
    return tokens


def _collect_scene(db, result, si, name, scene, cfg, lidar, suite, root, progress) -> None:
    if scene.ego_trajectory is None:
        raise CollectError(f"{name}: scene has no ego trajectory")
    log_token = generate_token("log", name)
    db.insert("log", {
        "token": log_token,
        "logfile": name,
        "vehicle": "ego",
        "date_captured": "synthetic",
        "location": "underground-parking-lot",
    })
    map_token = generate_token("map", name)
    map_file = f"maps/{map_token}.png"
    _render_map(scene, root / map_file)
    db.insert("map", {"token": map_token, "log_tokens": [log_token], "category": "semantic_prior", "filename": map_file})
    calib = _calibration_rows(db, name, lidar, suite)

    n = cfg.frames_per_scene
    key_frames = [f for f in range(n) if is_keyframe(f, cfg)]
    sample_tok = {f: generate_token("sample", f"{name}:{f}") for f in key_frames}
    sd_tok = [generate_token("sample_data", f"{name}:{f}:{lidar.name}") for f in range(n)]
    ann_by_instance: dict[str, list[dict]] = {}
    instance_object: dict[str, int] = {}
    key_iter = iter(key_frames)
    next_key = next(key_iter, None)

    for f in range(n):
        if progress:
            progress(f"{name}: frame {f}/{n}")
        t = f * cfg.fixed_dt
        ts = frame_timestamp(si, f, cfg)
        ego = scene.ego_trajectory.pose_at(t)
        ego_tok = generate_token("ego_pose", f"{name}:{f}")
        db.insert("ego_pose", {
            "token": ego_tok,
            "timestamp": ts,
            "rotation": _pose_quat(ego.rotation),
            "translation": [float(v) for v in ego.translation],
        })
        scan = simulate_scan(scene, ego, lidar, t)
        key = is_keyframe(f, cfg)
        while next_key is not None and next_key < f:
            next_key = next(key_iter, None)
        owner = sample_tok[next_key] if next_key is not None else sample_tok[key_frames[-1]]
        folder = "samples" if key else "sweeps"
        filename = f"{folder}/{lidar.name}/{name}__{lidar.name}__{ts}.pcd.bin"
        payload = np.column_stack([
            scan.points,
            255.0 * scan.incidence_cosine,
            scan.channel.astype(np.float64),
        ])
        write_point_bin(payload, root / filename)
        db.insert("sample_data", {
            "token": sd_tok[f],
            "sample_token": owner,
            "ego_pose_token": ego_tok,
            "calibrated_sensor_token": calib[lidar.name],
            "timestamp": ts,
            "fileformat": "pcd",
            "is_key_frame": key,
            "height": 0,
            "width": 0,
            "filename": filename,
            "prev": sd_tok[f - 1] if f > 0 else "",
            "next": sd_tok[f + 1] if f + 1 < n else "",
            "num_points": len(scan),
        })
        if not key:
            result.sweeps += 1
            continue
        result.keyframes += 1
        k = key_frames.index(f)
        db.insert("sample", {
            "token": sample_tok[f],
            "timestamp": ts,
            "scene_token": generate_token("scene", name),
            "prev": sample_tok[key_frames[k - 1]] if k > 0 else "",
            "next": sample_tok[key_frames[k + 1]] if k + 1 < len(key_frames) else "",
        })
        seg_file = f"lidarseg/{VERSION}/{sd_tok[f]}_lidarseg.bin"
        write_lidarseg(map_tags(scan.semantic_tag), root / seg_file)
        db.insert("lidarseg", {"token": generate_token("lidarseg", sd_tok[f]), "sample_data_token": sd_tok[f], "filename": seg_file})
        anns = annotate_keyframe(
            scene, ego, sample_tok[f], t,
            instance_key=name, lidar=lidar, scan=scan, include_static=cfg.annotate_static,
        )
        for a in anns:
            row = {
                "token": a.token,
                "sample_token": a.sample_token,
                "instance_token": a.instance_token,
                "visibility_token": a.visibility_token,
                "attribute_tokens": [generate_token("attribute", a.attribute)] if a.attribute else [],
                "translation": [float(v) for v in a.center],
                "size": [float(v) for v in a.size],
                "rotation": [float(v) for v in a.rotation],
                "prev": "",
                "next": "",
                "num_lidar_pts": a.num_lidar_pts,
                "num_radar_pts": 0,
            }
            ann_by_instance.setdefault(a.instance_token, []).append(row)
            instance_object[a.instance_token] = map_semantic_tag(scene.get(a.object_index).tag)[0]

    for inst, rows in ann_by_instance.items():
        for i, row in enumerate(rows):
            row["prev"] = rows[i - 1]["token"] if i > 0 else ""
            row["next"] = rows[i + 1]["token"] if i + 1 < len(rows) else ""
            db.insert("sample_annotation", row)
        db.insert("instance", {
            "token": inst,
            "category_token": generate_token("category", str(instance_object[inst])),
            "nbr_annotations": len(rows),
            "first_annotation_token": rows[0]["token"],
            "last_annotation_token": rows[-1]["token"],
        })
    db.insert("scene", {
        "token": generate_token("scene", name),
        "log_token": log_token,
        "nbr_samples": len(key_frames),
        "first_sample_token": sample_tok[key_frames[0]],
        "last_sample_token": sample_tok[key_frames[-1]],
        "name": name,
        "description": f"synthetic parking lot, seed {scene.config.seed if scene.config else 'n/a'}",
    })
