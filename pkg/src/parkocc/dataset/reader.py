"""Read a collected dataset back into keyframe records."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geom import FrameId, PoseSE3
from ..simworld.scene import SceneConfig
from ..stitchfuse import FrameInput, KeyFrame, LabeledCloud, ObjectBox
from .collect import VERSION
from .db import RelationalDB
from .io import read_lidarseg, read_point_bin


@dataclass(frozen=True, eq=False)
class KeyframeRecord:
    scene: str
    sample_token: str
    sample_data_token: str
    timestamp: int
    frame_index: int
    time: float  # seconds since scene start
    ego_pose: PoseSE3
    sensor_pose: PoseSE3
    scan: LabeledCloud  # sensor frame
    boxes: tuple[ObjectBox, ...]  # world poses keyed by instance token

    def frame_input(self) -> FrameInput:
        return FrameInput(self.scan, self.ego_pose, self.sensor_pose, self.boxes)

    def key(self) -> KeyFrame:
        return KeyFrame(self.ego_pose, self.sensor_pose, self.boxes)


class DatasetReader:
    def __init__(self, root) -> None:
        self.root = Path(root)
        self.db = RelationalDB.load(self.root / VERSION)
        self.manifest = json.loads((self.root / "manifest.json").read_text())
        c = self.manifest["collect"]
        self.fixed_dt = float(c["fixed_dt"])
        self.frames_per_scene = int(c["frames_per_scene"])
        self._seg = {r["sample_data_token"]: r for r in self.db.tables["lidarseg"]}
        self._ann_by_sample: dict[str, list[dict]] = {}
        for r in self.db.tables["sample_annotation"]:
            self._ann_by_sample.setdefault(r["sample_token"], []).append(r)

    def scene_names(self) -> list[str]:
        return [s["name"] for s in self.db.tables["scene"]]

    def scene_config(self, name: str) -> SceneConfig | None:
        for s in self.manifest["scenes"]:
            if s["name"] == name and s.get("config"):
                return SceneConfig.from_dict(s["config"])
        return None

    def scene_index(self, name: str) -> int:
        return self.scene_names().index(name)

    def _scene_row(self, name: str) -> dict:
        for s in self.db.tables["scene"]:
            if s["name"] == name:
                return s
        raise KeyError(f"no scene named {name!r}")

    def sample_tokens(self, name: str) -> list[str]:
        out = []
        tok = self._scene_row(name)["first_sample_token"]
        while tok:
            out.append(tok)
            tok = self.db.get("sample", tok)["next"]
        return out

    def keyframes(self, name: str) -> list[KeyframeRecord]:
        si = self.scene_index(name)
        sd_by_sample = {
            r["sample_token"]: r for r in self.db.tables["sample_data"] if r["is_key_frame"]
        }
        out = []
        for tok in self.sample_tokens(name):
            sd = sd_by_sample[tok]
            out.append(self._record(name, si, tok, sd))
        return out

    def _record(self, name: str, si: int, sample_token: str, sd: dict) -> KeyframeRecord:
        ego_row = self.db.get("ego_pose", sd["ego_pose_token"])
        cal = self.db.get("calibrated_sensor", sd["calibrated_sensor_token"])
        channel = self.db.get("sensor", cal["sensor_token"])["channel"]
        ego = PoseSE3.from_quaternion(ego_row["translation"], ego_row["rotation"], source=FrameId.ego(), target=FrameId.world())
        sensor = PoseSE3.from_quaternion(cal["translation"], cal["rotation"], source=FrameId.sensor(channel), target=FrameId.ego())
        pts = read_point_bin(self.root / sd["filename"])
        labels = read_lidarseg(self.root / self._seg[sd["token"]]["filename"])
        scan = LabeledCloud(pts[:, :3].astype(np.float64), labels, FrameId.sensor(channel), np.zeros(3))
        boxes = []
        for a in self._ann_by_sample.get(sample_token, []):  # object index order
            w, l, h = a["size"]
            boxes.append(ObjectBox(
                a["instance_token"],
                np.array([l / 2, w / 2, h / 2]),
                PoseSE3.from_quaternion(a["translation"], a["rotation"], target=FrameId.world()),
            ))
        frame_global = int(round(sd["timestamp"] / (self.fixed_dt * 1e6)))
        frame = frame_global - si * self.frames_per_scene
        return KeyframeRecord(
            name, sample_token, sd["token"], sd["timestamp"], frame, frame * self.fixed_dt,
            ego, sensor, scan, tuple(boxes),
        )
