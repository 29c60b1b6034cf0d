import json
import shutil
import struct

import numpy as np
import pytest

from conftest import md5_reference, small_collect, small_scenes
from parkocc.dataset import (
    CollectConfig,
    CollectError,
    DatasetReader,
    RelationalDB,
    TruncatedFileError,
    UnknownTagError,
    collect_run,
    generate_token,
    is_keyframe,
    is_token,
    map_semantic_tag,
    map_tags,
    read_lidarseg,
    read_point_bin,
    tree_digest,
    validate_dataset,
    write_lidarseg,
    write_point_bin,
)
from parkocc.dataset.collect import VERSION
from parkocc.dataset.sensors import DEFAULT_CAMERAS
from parkocc.tags import NUSCENES_TAGS, categories

RFC_VECTORS = {
    b"": "d41d8cd98f00b204e9800998ecf8427e",
    b"a": "0cc175b9c0f1b6a831c399e269772661",
    b"abc": "900150983cd24fb0d6963f7d28e17f72",
    b"message digest": "f96b697d7cb7938d525a2f31aaf161d0",
    b"abcdefghijklmnopqrstuvwxyz": "c3fcd3d76192e4007dfb496cca67e13b",
}


# -- tokens ------------------------------------------------------------------


@pytest.mark.parametrize("msg,digest", RFC_VECTORS.items())
def test_reference_md5_reproduces_rfc_vectors(msg, digest):
    assert md5_reference(msg) == digest


def test_token_is_md5_of_concatenation():
    assert generate_token("", "") == "d41d8cd98f00b204e9800998ecf8427e"
    assert generate_token("a", "bc") == "900150983cd24fb0d6963f7d28e17f72"
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = "".join(chr(c) for c in rng.integers(32, 127, rng.integers(0, 20)))
        d = "".join(chr(c) for c in rng.integers(32, 127, rng.integers(0, 90)))
        assert generate_token(k, d) == md5_reference((k + d).encode())


def test_is_token():
    assert is_token("0" * 32) and not is_token("0" * 31) and not is_token("A" * 32) and not is_token(None)


# -- tag mapping ---------------------------------------------------------------


@pytest.mark.parametrize(
    "src,nus,name",
    [
        (0, 0, "noise"),
        (1, 24, "flat.driveable_surface"),
        (4, 28, "static.mamade"),
        (12, 2, "human.pedestrain.adult"),
        (14, 17, "vehicle.car"),
        (16, 16, "vehicle.bus.rigid"),
        (17, 15, "vehicle.bus.rigid"),
        (21, 9, "movable_object.barrier"),
        (30, 24, "flat.driveable_surface"),
    ],
)
def test_tag_table_rows(src, nus, name):
    assert map_semantic_tag(src) == (nus, name)


def test_tag_vocabulary():
    assert len(NUSCENES_TAGS) == 15
    assert [t for t, _ in categories()] == sorted(t for t, _ in categories())
    for bad in (-1, 31):
        with pytest.raises(UnknownTagError):
            map_semantic_tag(bad)
    with pytest.raises(UnknownTagError):
        map_tags(np.array([3, 40]))


# -- keyframe rule and timing --------------------------------------------------


def test_keyframe_rule():
    cfg = CollectConfig()
    assert [f for f in range(20) if is_keyframe(f, cfg)] == [9, 19]
    assert cfg.keyframe_ratio == 10


def test_zero_keyframe_config_rejected():
    with pytest.raises(ValueError, match="zero keyframes"):
        CollectConfig(frames_per_scene=5).validate()
    with pytest.raises(ValueError, match="integer multiple"):
        CollectConfig(fixed_dt=0.03).validate()


# -- binary payloads -----------------------------------------------------------


def test_point_bin_layout(tmp_path):
    pts = np.array([[1.0, -2.5, 3.25, 128.0, 7.0], [0.0, 0.5, -1.0, 0.0, 63.0]])
    path = write_point_bin(pts, tmp_path / "a.bin")
    raw = path.read_bytes()
    assert len(raw) == 40
    assert raw == b"".join(struct.pack("<5f", *row) for row in pts)
    assert raw[:20].hex() == "0000803f" "000020c0" "00005040" "00000043" "0000e040"
    assert np.array_equal(read_point_bin(path), pts.astype(np.float32))


def test_truncated_point_file(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(b"\0" * 21)
    with pytest.raises(TruncatedFileError):
        read_point_bin(path)


def test_lidarseg_bytes(tmp_path):
    path = write_lidarseg(map_tags(np.array([14, 4, 1])), tmp_path / "l.bin")
    assert path.read_bytes() == bytes([0x11, 0x1C, 0x18])
    assert read_lidarseg(path).tolist() == [17, 28, 24]
    with pytest.raises(ValueError):
        write_lidarseg(np.array([256]), tmp_path / "bad.bin")


def test_camera_focal_length():
    front = DEFAULT_CAMERAS[0]
    assert front.focal == pytest.approx(1142.51, abs=0.01)
    k = np.array(front.intrinsic())
    assert k[0, 2] == 800 and k[1, 2] == 450


# -- collection ----------------------------------------------------------------


@pytest.fixture(scope="module")
def fifty_frames(tmp_path_factory):
    root = tmp_path_factory.mktemp("fifty") / "dataset"
    cfg = CollectConfig(keyframe_interval=0.25, frames_per_scene=50, scene_count=1,
                        sensors=small_collect().sensors)
    res = collect_run(small_scenes(1, 50), cfg, root)
    return root, res


def test_sample_and_sweep_counts(fifty_frames):
    root, res = fifty_frames
    assert (res.keyframes, res.sweeps) == (10, 40)
    db = RelationalDB.load(root / VERSION)
    assert len(db.tables["sample"]) == 10
    keys = [r for r in db.tables["sample_data"] if r["is_key_frame"]]
    assert len(keys) == 10 and len(db.tables["sample_data"]) == 50
    assert len(list((root / "samples").rglob("*.bin"))) == 10
    assert len(list((root / "sweeps").rglob("*.bin"))) == 40


def test_collected_tree_validates(fifty_frames):
    root, _ = fifty_frames
    report = validate_dataset(root)
    assert report.ok, [str(f) for f in report.findings]


def test_tokens_unique_across_tables(fifty_frames):
    db = RelationalDB.load(fifty_frames[0] / VERSION)
    toks = [t for t in db.all_tokens()]
    assert len(toks) == len(set(toks))


def test_point_and_label_files_agree(fifty_frames):
    root, _ = fifty_frames
    db = RelationalDB.load(root / VERSION)
    for seg in db.tables["lidarseg"]:
        sd = db.get("sample_data", seg["sample_data_token"])
        pts = read_point_bin(root / sd["filename"])
        labels = read_lidarseg(root / seg["filename"])
        assert len(pts) == len(labels) == sd["num_points"]
        assert set(labels.tolist()) <= NUSCENES_TAGS


def test_collection_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    collect_run(small_scenes(1, 20), small_collect(1, 20), a)
    collect_run(small_scenes(1, 20), small_collect(1, 20), b)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    assert tree_digest(a) == tree_digest(b)


def test_refuses_non_empty_output(tmp_path):
    (tmp_path / "x").mkdir()
    (tmp_path / "x" / "junk").write_text("1")
    with pytest.raises(CollectError, match="not empty"):
        collect_run(small_scenes(1, 10), small_collect(1, 10), tmp_path / "x")


def test_reader_keyframes(small_dataset):
    rd = DatasetReader(small_dataset)
    names = rd.scene_names()
    assert names == ["scene-0001", "scene-0002"]
    kfs = rd.keyframes(names[0])
    assert len(kfs) == 4
    assert [round(k.time, 2) for k in kfs] == [0.45, 0.95, 1.45, 1.95]


# -- validator findings ----------------------------------------------------------


def corrupted_copy(src, tmp_path):
    dst = tmp_path / "copy"
    shutil.copytree(src, dst)
    return dst


def rewrite_table(root, table, fn):
    path = root / VERSION / f"{table}.json"
    rows = json.loads(path.read_text())
    fn(rows)
    path.write_text(json.dumps(rows))


def test_missing_label_file_is_reported(small_dataset, tmp_path):
    root = corrupted_copy(small_dataset, tmp_path)
    next((root / "lidarseg").rglob("*.bin")).unlink()
    assert "missing companion label file" in validate_dataset(root).codes()


def test_malformed_token_is_reported(small_dataset, tmp_path):
    root = corrupted_copy(small_dataset, tmp_path)
    rewrite_table(root, "log", lambda rows: rows[0].update(token="not-a-token"))
    codes = validate_dataset(root).codes()
    assert "malformed_token" in codes and "dangling_foreign_key" in codes


def test_dangling_reference_is_reported(small_dataset, tmp_path):
    root = corrupted_copy(small_dataset, tmp_path)
    rewrite_table(root, "sample_data", lambda rows: rows[3].update(ego_pose_token="f" * 32))
    report = validate_dataset(root)
    assert report.codes() == {"dangling_foreign_key"}
    assert "ego_pose_token" in report.findings[0].message


def test_truncated_bin_and_bad_quaternion(small_dataset, tmp_path):
    root = corrupted_copy(small_dataset, tmp_path)
    f = next((root / "sweeps").rglob("*.bin"))
    f.write_bytes(f.read_bytes()[:-3])
    rewrite_table(root, "ego_pose", lambda rows: rows[0].update(rotation=[1.0, 1.0, 0.0, 0.0]))
    codes = validate_dataset(root).codes()
    assert {"truncated_point_file", "quaternion_not_unit"} <= codes


def test_digest_changes_with_content(small_dataset, tmp_path):
    root = corrupted_copy(small_dataset, tmp_path)
    before = tree_digest(root)
    assert before == validate_dataset(small_dataset).digest
    (root / "manifest.json").write_text((root / "manifest.json").read_text() + " ")
    assert tree_digest(root) != before
