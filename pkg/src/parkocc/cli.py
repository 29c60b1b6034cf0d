"""Command-line entry point: ``parkocc <subcommand> [options]``.

Exit codes: 0 success, 1 validation findings, 2 usage error, 3 pipeline stage failure.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .dataset import CollectConfig, CollectError, SensorSuite, collect_run, validate_dataset
from .dataset.io import read_lidarseg, read_point_bin
from .dataset.reader import DatasetReader
from .evalkit import evaluate_run, grid_path
from .occgrid import GridSpec, GTConfig, StageError, baseline_predict, densify_aggregate, gt_from_densified
from .occgrid.container import MalformedGridError, export_grid_ply, load_grid, save_grid
from .occgrid.observed import observed_mask
from .ply import colors_for, write_ply_points
from .simworld import LidarSpec, SceneConfig, SceneInfeasibleError, analytic_occupancy, build_parking_lot
from .stitchfuse import aggregate_sequence

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_STAGE = 0, 1, 2, 3

log = logging.getLogger("parkocc")

EXAMPLE_CONFIG = """\
# parkocc run configuration. Every key is optional; omitted keys keep their defaults.
out: parkocc_out            # output root: dataset/, gts/, preds/, eval/
seed: 0                     # master seed; each scene derives its own seed from it
scene_count: 3
frames_per_scene: 200
fixed_dt: 0.05              # simulation step (s)
keyframe_interval: 0.5      # s; a frame is a keyframe every interval / fixed_dt frames
scene:                      # parking-lot generator (the seed and duration are set per scene)
  lot_width: 40.0
  lot_length: 60.0
  ceiling_height: 3.0
  pillar_spacing: 8.0
  parked_car_density: 0.5
  dynamic_car_count: 2
lidar:
  channels: 64
  range: 80.0
  azimuth_steps: 900
  vertical_fov: [-30.0, 10.0]
grid:                       # key-frame LiDAR coordinates
  origin: [-25.6, -25.6, -2.1]
  voxel_size: 0.2
  dims: [256, 256, 32]
gt:
  normals_k: 10
  static_poisson: {resolution: 256, cell_size: 0.2, smoothing: 0.0, trim: 0.4}
  object_poisson: {resolution: 64, cell_size: 0.1, smoothing: 0.0, trim: 0.3}
"""


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    out: str = "parkocc_out"
    seed: int = 0
    scene_count: int = 3
    frames_per_scene: int = 200
    fixed_dt: float = 0.05
    keyframe_interval: float = 0.5
    scene: SceneConfig = field(default_factory=SceneConfig)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    gt: GTConfig = field(default_factory=GTConfig)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: v for k, v in data.items() if k not in ("scene", "lidar", "grid", "gt")}
        try:
            base = cls()
            if "scene" in data:
                kw["scene"] = SceneConfig.from_dict({**base.scene.to_dict(), **(data["scene"] or {})})
            if "lidar" in data:
                kw["lidar"] = LidarSpec.from_dict({**base.lidar.to_dict(), **(data["lidar"] or {})})
            if "grid" in data:
                kw["grid"] = GridSpec.from_dict({**base.grid.to_dict(), **(data["grid"] or {})})
            if "gt" in data:
                kw["gt"] = GTConfig.from_dict(data["gt"] or {})
            cfg = cls(**kw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise UsageError(f"config {path} is not valid YAML: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise UsageError(f"config {path} must be a mapping")
        return cls.from_dict(data)

    def validate(self) -> None:
        try:
            self.collect_config().validate()
            for i in range(self.scene_count):
                self.scene_config(i).validate()
            self.lidar.validate()
            self.grid.validate()
            self.gt.static_poisson.validate()
            self.gt.object_poisson.validate()
        except ValueError as exc:
            raise UsageError(f"invalid config: {exc}") from exc

    def collect_config(self) -> CollectConfig:
        return CollectConfig(
            keyframe_interval=self.keyframe_interval,
            fixed_dt=self.fixed_dt,
            scene_count=self.scene_count,
            frames_per_scene=self.frames_per_scene,
            sensors=SensorSuite(lidar=self.lidar),
        )

    def scene_config(self, index: int) -> SceneConfig:
        return replace(
            self.scene,
            seed=scene_seed(self.seed, index),
            fixed_dt=self.fixed_dt,
            scene_duration=self.frames_per_scene * self.fixed_dt,
        )

    @property
    def root(self) -> Path:
        return Path(self.out)


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


# -- subcommands ------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    out = cfg.root / "dataset"
    scenes = []
    for i in range(cfg.scene_count):
        try:
            scenes.append(build_parking_lot(cfg.scene_config(i)))
        except SceneInfeasibleError as exc:
            raise UsageError(f"scene {i}: {exc}") from exc
    t0 = time.perf_counter()
    try:
        res = collect_run(scenes, cfg.collect_config(), out, overwrite=args.overwrite, progress=print)
    except CollectError as exc:
        raise UsageError(str(exc)) from exc
    print(f"wrote {out}: {res.keyframes} keyframes, {res.sweeps} sweeps in {time.perf_counter() - t0:.1f}s")
    report = validate_dataset(out)
    for f in report.findings:
        print(f)
    return EXIT_OK if report.ok else EXIT_FINDINGS


def _prepare_output(path: Path, overwrite: bool) -> None:
    if path.exists() and any(path.iterdir()):
        if not overwrite:
            raise UsageError(f"{path} is not empty (use --overwrite)")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)


def _gt_scene(dataset: str, name: str, out: str, spec: GridSpec, gt_cfg: GTConfig) -> tuple[list[str], list[str]]:
    """Ground truth for every keyframe of one scene; returns (printed lines, failures)."""
    rd = DatasetReader(dataset)
    lines, failures = [], []
    kfs = rd.keyframes(name)
    try:
        agg = aggregate_sequence([k.frame_input() for k in kfs])
        dens = densify_aggregate(agg, spec, gt_cfg, keys=[k.key() for k in kfs])
    except (StageError, ValueError) as exc:
        stage = getattr(exc, "stage", "aggregate")
        return lines, [f"{name}: stage {stage} failed for the whole scene: {exc}"]
    scfg = rd.scene_config(name)
    scene = build_parking_lot(scfg) if scfg is not None else None
    for kf in kfs:
        try:
            grid = gt_from_densified(dens, agg, kf.key(), spec, gt_cfg)
        except StageError as exc:
            failures.append(f"{name}/{kf.sample_token}: stage {exc.stage} failed: {exc}")
            continue
        save_grid(grid, grid_path(out, name, kf.sample_token))
        line = f"{name}/{kf.sample_token} t={kf.time:.2f}s occupied={grid.occupied_count}"
        if scene is not None:
            tp, fp, fn, acc = oracle_agreement(grid, scene, kf)
            line += f" oracle_iou={tp / max(tp + fp + fn, 1):.4f} label_acc={acc:.4f}"
        lines.append(line)
    return lines, failures


def oracle_agreement(grid, scene, kf) -> tuple[int, int, int, float]:
    """Binary counts and label accuracy against the analytic occupancy on observed voxels."""
    spec = grid.spec
    oracle = analytic_occupancy(scene, spec, kf.time, grid_pose=kf.key().sensor_to_world)
    seen = observed_mask(spec, np.zeros(3), kf.scan.points)
    g, o = grid.occupied & seen, oracle.occupied & seen
    both = g & o
    acc = float((grid.labels[both] == oracle.labels[both]).mean()) if both.any() else 1.0
    return int(both.sum()), int((g & ~o).sum()), int((o & ~g).sum()), acc


def _dataset_dir(cfg: RunConfig, args) -> Path:
    path = Path(args.dataset) if getattr(args, "dataset", None) else cfg.root / "dataset"
    if not (path / "manifest.json").exists():
        raise UsageError(f"{path} does not look like a dataset (no manifest.json)")
    return path


def cmd_gt(cfg: RunConfig, args) -> int:
    dataset = _dataset_dir(cfg, args)
    report = validate_dataset(dataset)
    if not report.ok:
        for f in report.findings:
            print(f)
        print(f"{dataset} has validation findings; not generating ground truth")
        return EXIT_FINDINGS
    out = cfg.root / "gts"
    _prepare_output(out, args.overwrite)
    names = DatasetReader(dataset).scene_names()
    jobs = [(str(dataset), n, str(out), cfg.grid, cfg.gt) for n in names]
    failures = []
    if args.jobs > 1 and len(names) > 1:
        pool = ProcessPoolExecutor(min(args.jobs, len(names)))
        results = pool.map(_gt_scene, *zip(*jobs))
    else:
        pool = None
        results = (_gt_scene(*j) for j in jobs)
    try:
        for name, (lines, fails) in zip(names, results):
            print(f"{name}: {len(lines)} keyframes written", flush=True)
            for line in lines:
                print(line, flush=True)
            failures.extend(fails)
    finally:
        if pool is not None:
            pool.shutdown()
    for f in failures:
        print(f"error: {f}", file=sys.stderr)
    return EXIT_STAGE if failures else EXIT_OK


def cmd_baseline(cfg: RunConfig, args) -> int:
    dataset = _dataset_dir(cfg, args)
    out = cfg.root / "preds"
    _prepare_output(out, args.overwrite)
    rd = DatasetReader(dataset)
    n = 0
    for name in rd.scene_names():
        for kf in rd.keyframes(name):
            save_grid(baseline_predict(kf.scan, cfg.grid), grid_path(out, name, kf.sample_token))
            n += 1
    print(f"wrote {n} baseline grids to {out}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    gt = Path(args.gt) if args.gt else cfg.root / "gts"
    pred = Path(args.pred) if args.pred else cfg.root / "preds"
    for p in (gt, pred):
        if not p.is_dir():
            raise UsageError(f"{p} is not a directory")
    out = Path(args.report) if args.report else cfg.root / "eval"
    if out.exists() and any(out.iterdir()) and not args.overwrite:
        raise UsageError(f"{out} is not empty (use --overwrite)")
    report = evaluate_run(gt, pred, args.dataset, mode=args.miou_mode, out_dir=out, jobs=args.jobs)
    print(report.to_text(), end="")
    if not report.rows:
        print("no keyframe has both a ground-truth and a prediction grid", file=sys.stderr)
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_validate(cfg: RunConfig, args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise UsageError(f"{path} does not exist")
    report = validate_dataset(path)
    for f in report.findings:
        print(f)
    print(f"{len(report.findings)} findings over {report.rows} rows; digest {report.digest}")
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_export(cfg: RunConfig, args) -> int:
    src, dst = Path(args.input), Path(args.output)
    if not src.is_file():
        raise UsageError(f"{src} is not a file")
    try:
        if src.suffix == ".bin":
            pts = read_point_bin(src)
            labels = read_lidarseg(args.labels) if args.labels else None
            if labels is not None and len(labels) != len(pts):
                raise UsageError(f"{args.labels} has {len(labels)} labels for {len(pts)} points")
            write_ply_points(dst, pts[:, :3], None if labels is None else colors_for(labels))
            print(f"wrote {len(pts)} points to {dst}")
        else:
            grid = load_grid(src)
            export_grid_ply(grid, dst)
            print(f"wrote {grid.occupied_count} voxels to {dst}")
    except (MalformedGridError, ValueError, OSError) as exc:
        print(f"error: cannot export {src}: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


def cmd_config(cfg: RunConfig, args) -> int:
    print(EXAMPLE_CONFIG, end="")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (see `parkocc config`)")
    common.add_argument("--out", help="output root; overrides the config's out")
    common.add_argument("--seed", type=int, help="master seed; overrides the config's seed")
    common.add_argument("--overwrite", action="store_true", help="replace existing outputs")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="parkocc", description="Synthetic parking-lot occupancy datasets and dense ground truth.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="simulate scenes into <out>/dataset").set_defaults(func=cmd_synth)
    s = sub.add_parser("gt", parents=[common], help="dense ground truth into <out>/gts")
    s.add_argument("--dataset", help="dataset root (default <out>/dataset)")
    s.set_defaults(func=cmd_gt)
    s = sub.add_parser("baseline", parents=[common], help="single-scan predictions into <out>/preds")
    s.add_argument("--dataset", help="dataset root (default <out>/dataset)")
    s.set_defaults(func=cmd_baseline)
    s = sub.add_parser("eval", parents=[common], help="SC IoU and SSC mIoU of predictions against ground truth")
    s.add_argument("--gt", help="ground-truth grids (default <out>/gts)")
    s.add_argument("--pred", help="predicted grids (default <out>/preds)")
    s.add_argument("--dataset", help="dataset root, to list keyframes with no ground truth")
    s.add_argument("--report", help="report directory (default <out>/eval)")
    s.add_argument("--miou-mode", choices=("present", "fixed"), default="present")
    s.set_defaults(func=cmd_eval)
    s = sub.add_parser("validate", parents=[common], help="check a dataset tree")
    s.add_argument("path")
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("export-ply", parents=[common], help="grid (.pocc) or point file (.bin) to ASCII PLY")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--labels", help="lidarseg file colouring a .bin input")
    s.set_defaults(func=cmd_export)
    sub.add_parser("config", parents=[common], help="print a commented example configuration").set_defaults(func=cmd_config)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    if args.out is not None:
        over["out"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    return replace(cfg, **over) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"parkocc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"parkocc: stage {exc.stage} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
