"""Confusion counting, SC IoU / SSC mIoU and run-level reports.

Per-class accounting follows the usual semantic-segmentation convention: a
voxel occupied in both grids with different labels is a false positive for the
predicted class and a false negative for the ground-truth class.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .occgrid.container import MalformedGridError, load_grid
from .occgrid.grid import GridSpecMismatchError, VoxelGrid, check_same_spec
from .tags import NUSCENES_TAGS, category_name

GRID_NAME = "labels.pocc"
MIOU_MODES = ("present", "fixed")
_NCLS = 256


@dataclass(frozen=True, eq=False)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    class_tp: np.ndarray  # indexed by nuScenes tag
    class_fp: np.ndarray
    class_fn: np.ndarray
    total: int = 0  # voxels compared

    @classmethod
    def zero(cls) -> "ConfusionCounts":
        z = np.zeros(_NCLS, np.int64)
        return cls(0, 0, 0, z, z.copy(), z.copy(), 0)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
            self.class_tp + other.class_tp, self.class_fp + other.class_fp, self.class_fn + other.class_fn,
            self.total + other.total,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionCounts):
            return NotImplemented
        return (
            (self.tp, self.fp, self.fn, self.total) == (other.tp, other.fp, other.fn, other.total)
            and np.array_equal(self.class_tp, other.class_tp)
            and np.array_equal(self.class_fp, other.class_fp)
            and np.array_equal(self.class_fn, other.class_fn)
        )

    def present_classes(self) -> list[int]:
        seen = (self.class_tp + self.class_fp + self.class_fn) > 0
        return np.flatnonzero(seen).tolist()

    def class_counts(self, c: int) -> tuple[int, int, int]:
        return int(self.class_tp[c]), int(self.class_fp[c]), int(self.class_fn[c])


def confusion(pred: VoxelGrid, gt: VoxelGrid) -> ConfusionCounts:
    check_same_spec(pred, gt)
    p, g = pred.occupied, gt.occupied
    lp = np.where(p, pred.labels, 0).astype(np.int64)
    lg = np.where(g, gt.labels, 0).astype(np.int64)
    both = p & g
    agree = both & (lp == lg)
    ctp = np.bincount(lp[agree], minlength=_NCLS)
    # pred positives for class c that are not gt positives for c, and the converse
    cfp = np.bincount(lp[p & ~agree], minlength=_NCLS)
    cfn = np.bincount(lg[g & ~agree], minlength=_NCLS)
    return ConfusionCounts(
        int(both.sum()), int((p & ~g).sum()), int((g & ~p).sum()),
        ctp, cfp, cfn, int(p.size),
    )


def _ratio(tp: int, fp: int, fn: int) -> float:
    den = tp + fp + fn
    return 1.0 if den == 0 else tp / den


def iou(c: ConfusionCounts) -> float:
    """Binary IoU; 1.0 when both grids are empty."""
    return _ratio(c.tp, c.fp, c.fn)


def class_iou(c: ConfusionCounts) -> dict[int, float]:
    return {k: _ratio(*c.class_counts(k)) for k in c.present_classes()}


def miou(c: ConfusionCounts, mode: str = "present") -> float | None:
    """Mean per-class IoU; None when no class is present in either grid.

    ``present`` averages over classes seen in either grid. ``fixed`` averages
    over the whole nuScenes tag vocabulary, scoring absent classes as 0.
    """
    if mode == "present":
        classes = c.present_classes()
        if not classes:
            return None
        return float(np.mean([_ratio(*c.class_counts(k)) for k in classes]))
    if mode == "fixed":
        vals = []
        for k in sorted(NUSCENES_TAGS):
            tp, fp, fn = c.class_counts(k)
            vals.append(tp / (tp + fp + fn) if tp + fp + fn else 0.0)
        return float(np.mean(vals))
    raise ValueError(f"unknown mIoU mode {mode!r}; expected one of {MIOU_MODES}")


# -- run-level evaluation ---------------------------------------------------


@dataclass
class RunReport:
    rows: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    missing_pred: list[str] = field(default_factory=list)
    missing_gt: list[str] = field(default_factory=list)
    malformed: list[dict] = field(default_factory=list)
    mode: str = "present"

    def to_dict(self) -> dict:
        return {
            "miou_mode": self.mode,
            "keyframes": self.rows,
            "aggregate": self.aggregate,
            "missing_pred": self.missing_pred,
            "missing_gt": self.missing_gt,
            "malformed": self.malformed,
        }

    def to_text(self) -> str:
        lines = [f"{'keyframe':<72} {'SC IoU':>8} {'SSC mIoU':>9} {'TP':>8} {'FP':>8} {'FN':>8}"]
        for r in self.rows:
            lines.append(
                f"{r['keyframe']:<72} {r['sc_iou']:>8.4f} {_fmt(r['ssc_miou']):>9} "
                f"{r['tp']:>8} {r['fp']:>8} {r['fn']:>8}"
            )
        a = self.aggregate
        if a:
            lines.append("")
            lines.append(
                f"{'aggregate (' + str(a['keyframes']) + ' keyframes)':<72} {a['sc_iou']:>8.4f} "
                f"{_fmt(a['ssc_miou']):>9} {a['tp']:>8} {a['fp']:>8} {a['fn']:>8}"
            )
            for tag, v in sorted(a["class_iou"].items(), key=lambda kv: int(kv[0])):
                lines.append(f"  class {int(tag):>3} {category_name(int(tag)):<28} IoU {v:.4f}")
        for k in self.missing_pred:
            lines.append(f"missing prediction: {k}")
        for k in self.missing_gt:
            lines.append(f"missing ground truth: {k}")
        for m in self.malformed:
            lines.append(f"malformed grid: {m['path']} ({m['error']})")
        return "\n".join(lines) + "\n"


def _fmt(v: float | None) -> str:
    return "undef" if v is None else f"{v:.4f}"


def grid_path(root, scene: str, sample: str) -> Path:
    return Path(root) / scene / sample / GRID_NAME


def find_grids(root) -> dict[str, Path]:
    """``scene/sample`` -> grid file under ``root``."""
    root = Path(root)
    return {p.parent.relative_to(root).as_posix(): p for p in sorted(root.glob(f"*/*/{GRID_NAME}"))}


def _dataset_keys(dataset) -> list[str]:
    from .dataset.reader import DatasetReader

    rd = DatasetReader(dataset)
    return [f"{name}/{tok}" for name in rd.scene_names() for tok in rd.sample_tokens(name)]


def _summary(c: ConfusionCounts, mode: str) -> dict:
    return {
        "sc_iou": iou(c),
        "ssc_miou": miou(c, mode),
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn,
        "class_iou": {str(k): v for k, v in class_iou(c).items()},
    }


def evaluate_run(gt_dir, pred_dir, dataset=None, *, mode: str = "present", out_dir=None, jobs: int = 1) -> RunReport:
    """Compare every prediction grid with its ground truth and micro-average the counts.

    Missing and malformed grids are listed in the report rather than raised.
    With ``dataset`` set, keyframes absent from the ground-truth directory are
    listed as well.
    """
    if mode not in MIOU_MODES:
        raise ValueError(f"unknown mIoU mode {mode!r}; expected one of {MIOU_MODES}")
    gts, preds = find_grids(gt_dir), find_grids(pred_dir)
    report = RunReport(mode=mode)
    expected = set(gts)
    if dataset is not None:
        keys = _dataset_keys(dataset)
        report.missing_gt = sorted(set(keys) - set(gts))
        expected |= set(keys)
    report.missing_pred = sorted(expected - set(preds))
    shared = sorted(set(gts) & set(preds))

    def one(key: str):
        try:
            g = load_grid(gts[key])
        except (MalformedGridError, OSError) as exc:
            return key, None, {"path": f"gt/{key}/{GRID_NAME}", "error": str(exc)}
        try:
            p = load_grid(preds[key])
        except (MalformedGridError, OSError) as exc:
            return key, None, {"path": f"pred/{key}/{GRID_NAME}", "error": str(exc)}
        try:
            return key, confusion(p, g), None
        except GridSpecMismatchError as exc:
            return key, None, {"path": f"pred/{key}/{GRID_NAME}", "error": str(exc)}

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, shared))
    else:
        results = [one(k) for k in shared]

    total = ConfusionCounts.zero()
    used = 0
    for key, counts, bad in results:
        if bad is not None:
            report.malformed.append(bad)
            continue
        row = {"keyframe": key, **_summary(counts, mode)}
        report.rows.append(row)
        total = total + counts
        used += 1
    if used:
        report.aggregate = {"keyframes": used, **_summary(total, mode)}
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: RunReport, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    j, t = out / "report.json", out / "report.txt"
    j.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")
    t.write_text(report.to_text())
    return j, t
