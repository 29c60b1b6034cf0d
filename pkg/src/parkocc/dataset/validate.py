"""Schema and payload checks over a dataset tree. Findings are data, not exceptions."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..tags import NUSCENES_TAGS
from .collect import VERSION, CollectConfig, is_keyframe
from .db import FOREIGN_KEYS, NULLABLE, RelationalDB
from .io import RECORD_BYTES
from .tokens import is_token

# Tables whose own tokens follow another convention.
_FREE_FORM_TOKENS = {"visibility"}


@dataclass(frozen=True)
class Finding:
    code: str
    table: str
    token: str
    message: str

    def __str__(self) -> str:
        where = f"{self.table}:{self.token}" if self.token else self.table
        return f"[{self.code}] {where}: {self.message}"


@dataclass
class ValidationReport:
    root: Path
    findings: list[Finding] = field(default_factory=list)
    digest: str = ""
    rows: int = 0

    @property
    def ok(self) -> bool:
        return not self.findings

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}

    def add(self, code: str, table: str, token: str, message: str) -> None:
        self.findings.append(Finding(code, table, token, message))


def tree_digest(root) -> str:
    """sha256 over every file's relative path and bytes, in sorted path order."""
    root = Path(root)
    h = hashlib.sha256()
    files = sorted(p for p in root.rglob("*") if p.is_file())
    for p in files:
        rel = p.relative_to(root).as_posix()
        h.update(rel.encode() + b"\0")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


def _ratio_from_manifest(root: Path, report: ValidationReport) -> CollectConfig | None:
    path = root / "manifest.json"
    if not path.exists():
        report.add("missing_file", "manifest", "", "manifest.json not found")
        return None
    try:
        c = json.loads(path.read_text())["collect"]
        return CollectConfig(keyframe_interval=c["keyframe_interval"], fixed_dt=c["fixed_dt"])
    except (ValueError, KeyError, TypeError) as exc:
        report.add("malformed_manifest", "manifest", "", f"cannot read collect settings: {exc}")
        return None


def _walk(start: str, rows: dict[str, dict], table: str, report: ValidationReport, owner: str) -> list[str]:
    """Follow ``next`` links from ``start``; reports loops and prev/next mismatches."""
    seen: list[str] = []
    visited = set()
    cur, prev = start, ""
    while cur:
        if cur in visited:
            report.add("broken_sample_chain", table, cur, f"loop in linked list of {owner}")
            break
        row = rows.get(cur)
        if row is None:
            report.add("broken_sample_chain", table, cur, f"chain of {owner} points to a missing row")
            break
        if row.get("prev", "") != prev:
            report.add("broken_sample_chain", table, cur, f"prev is {row.get('prev')!r}, expected {prev!r}")
        visited.add(cur)
        seen.append(cur)
        prev, cur = cur, row.get("next", "")
    return seen


def validate_dataset(path) -> ValidationReport:
    root = Path(path)
    report = ValidationReport(root)
    meta = root / VERSION
    if not meta.is_dir():
        report.add("missing_file", VERSION, "", "table directory not found")
        report.digest = tree_digest(root) if root.exists() else ""
        return report
    db = RelationalDB.load(meta, strict=False)
    report.rows = len(db)
    for name, rows in db.tables.items():
        if name != "lidarseg" and not (meta / f"{name}.json").exists():
            report.add("missing_file", name, "", f"{name}.json not found")

    # Tokens: format and uniqueness.
    for name, rows in db.tables.items():
        seen = set()
        for row in rows:
            tok = row.get("token")
            if name not in _FREE_FORM_TOKENS and not is_token(tok):
                report.add("malformed_token", name, str(tok), "token is not 32 lowercase hex characters")
            if tok in seen:
                report.add("duplicate_token", name, str(tok), "token appears more than once")
            seen.add(tok)

    # Foreign keys.
    for name, fks in FOREIGN_KEYS.items():
        for row in db.tables[name]:
            for fld, target in fks.items():
                value = row.get(fld)
                values = value if isinstance(value, list) else [value]
                for v in values:
                    if v in ("", None) and fld in NULLABLE:
                        continue
                    if not db.has(target, v):
                        report.add("dangling_foreign_key", name, row.get("token", ""), f"{fld}={v!r} not in {target}")

    # Quaternions.
    for name in ("ego_pose", "calibrated_sensor", "sample_annotation"):
        for row in db.tables[name]:
            q = np.asarray(row.get("rotation", []), float)
            if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-6:
                report.add("quaternion_not_unit", name, row["token"], f"rotation {row.get('rotation')} is not a unit quaternion")

    # Sample lists per scene.
    samples = {r["token"]: r for r in db.tables["sample"]}
    by_scene: dict[str, list[dict]] = {}
    for r in samples.values():
        by_scene.setdefault(r.get("scene_token"), []).append(r)
    for scene in db.tables["scene"]:
        members = by_scene.get(scene["token"], [])
        heads = [r for r in members if not r.get("prev")]
        tails = [r for r in members if not r.get("next")]
        if len(heads) != 1 or len(tails) != 1:
            report.add("broken_sample_chain", "scene", scene["token"],
                       f"{len(heads)} samples without prev and {len(tails)} without next")
            continue
        order = _walk(heads[0]["token"], samples, "sample", report, scene["name"])
        if len(order) != len(members):
            report.add("broken_sample_chain", "scene", scene["token"], f"chain visits {len(order)} of {len(members)} samples")
        if scene.get("first_sample_token") != heads[0]["token"] or scene.get("last_sample_token") != tails[0]["token"]:
            report.add("broken_sample_chain", "scene", scene["token"], "first/last sample tokens disagree with the chain")
        if scene.get("nbr_samples") != len(members):
            report.add("broken_sample_chain", "scene", scene["token"], "nbr_samples disagrees with sample rows")

    # Sample data chains, keyframe flags and payloads.
    cfg = _ratio_from_manifest(root, report)
    sd_rows = {r["token"]: r for r in db.tables["sample_data"]}
    seg_by_sd = {r.get("sample_data_token"): r for r in db.tables["lidarseg"]}
    heads = [r for r in db.tables["sample_data"] if not r.get("prev")]
    for head in heads:
        order = _walk(head["token"], sd_rows, "sample_data", report, f"sample_data from {head['token']}")
        if cfg is None:
            continue
        for frame, tok in enumerate(order):
            row = sd_rows[tok]
            expected = is_keyframe(frame, cfg)
            if bool(row.get("is_key_frame")) != expected:
                report.add("keyframe_flag_mismatch", "sample_data", tok,
                           f"frame {frame}: is_key_frame={row.get('is_key_frame')} but rule gives {expected}")
            if expected:
                owner = samples.get(row.get("sample_token"))
                if owner is not None and owner.get("timestamp") != row.get("timestamp"):
                    report.add("keyframe_flag_mismatch", "sample_data", tok, "keyframe timestamp differs from its sample")

    for row in db.tables["sample_data"]:
        tok = row["token"]
        if row.get("fileformat") != "pcd":
            continue
        bin_path = root / row.get("filename", "")
        if not bin_path.is_file():
            report.add("missing_file", "sample_data", tok, f"{row.get('filename')} not found")
            continue
        size = os.path.getsize(bin_path)
        if size % RECORD_BYTES:
            report.add("truncated_point_file", "sample_data", tok, f"{size} bytes is not a multiple of {RECORD_BYTES}")
            continue
        n = size // RECORD_BYTES
        if "num_points" in row and row["num_points"] != n:
            report.add("point_count_mismatch", "sample_data", tok, f"file has {n} points, row records {row['num_points']}")
        seg = seg_by_sd.get(tok)
        if row.get("is_key_frame") and seg is None:
            report.add("missing companion label file", "sample_data", tok, "keyframe has no lidarseg row")
            continue
        if seg is None:
            continue
        seg_path = root / seg.get("filename", "")
        if not seg_path.is_file():
            report.add("missing companion label file", "lidarseg", seg["token"], f"{seg.get('filename')} not found")
            continue
        labels = np.frombuffer(seg_path.read_bytes(), np.uint8)
        if len(labels) != n:
            report.add("point_count_mismatch", "lidarseg", seg["token"], f"{len(labels)} labels for {n} points")
        bad = set(np.unique(labels).tolist()) - NUSCENES_TAGS
        if bad:
            report.add("unknown_label", "lidarseg", seg["token"], f"labels {sorted(bad)} outside the tag mapping")

    report.digest = tree_digest(root)
    return report
