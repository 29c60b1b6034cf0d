import numpy as np
import pytest

from parkocc.annotate import (
    VISIBILITY_EPS,
    annotate_keyframe,
    box_from_object,
    compute_visibility,
    target_points,
    visibility_level,
)
from parkocc.dataset import is_token
from parkocc.geom import PoseSE3
from parkocc.simworld import Box, LidarSpec, Plane, SceneConfig, SceneModel, build_parking_lot

LIDAR = LidarSpec()
ORIGIN = np.array([0.0, 0.0, 2.0])


def car(index, center, yaw=0.0, half=(2.3, 1.0, 0.8)):
    return Box(index, "parked_car", 14, np.array(half, float), pose=PoseSE3.from_rpy(center, yaw=yaw))


def block(index, lo, hi):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return Box(index, "wall", 4, (hi - lo) / 2, pose=PoseSE3(translation=(lo + hi) / 2))


def slab_entry(origin, d, lo, hi):
    t0, t1 = -np.inf, np.inf
    for a in range(3):
        if abs(d[a]) < 1e-15:
            if not lo[a] <= origin[a] <= hi[a]:
                return np.inf
            continue
        ta, tb = (lo[a] - origin[a]) / d[a], (hi[a] - origin[a]) / d[a]
        t0, t1 = max(t0, min(ta, tb)), min(t1, max(ta, tb))
    return t0 if t0 <= t1 and t1 >= 0 else np.inf


def oracle_visible_count(boxes, target, origin):
    """Count target points whose first intersection is the target or lies beyond the point."""
    count = 0
    for p in target_points(target, target.pose):
        v = p - origin
        dist = np.linalg.norm(v)
        d = v / dist
        entries = {b.index: max(slab_entry(origin, d, *b.aabb()), 0.0) for b in boxes}
        first = min(entries, key=entries.get)
        if first == target.index or entries[first] >= dist - VISIBILITY_EPS:
            count += 1
    return count


def test_level_map():
    assert [visibility_level(n) for n in range(6)] == [1, 1, 2, 3, 4, 4]
    with pytest.raises(ValueError):
        visibility_level(6)


def test_size_and_yaw_from_object():
    sc = SceneModel.from_objects([], [car(1, (10, 0, 0.8), yaw=30)])
    center, size, yaw = box_from_object(sc, 1, 0.0)
    assert size == pytest.approx((2.0, 4.6, 1.6))
    assert yaw == pytest.approx(30.0) and np.allclose(center, [10, 0, 0.8])


def test_target_points_on_footprint_edges():
    b = car(1, (10, 0, 0.8))
    pts = target_points(b, b.pose)
    assert pts.shape == (5, 3)
    assert np.allclose(pts[:, 2], 0.8)
    assert np.allclose(sorted(pts[:, 0]), [7.7, 10, 10, 10, 12.3])


def test_open_target_is_fully_visible():
    sc = SceneModel.from_objects([Plane(0, 0.0, True, 1)], [car(1, (10, 0, 0.8))])
    vis = compute_visibility(sc, PoseSE3(), 1, 0.0, LIDAR)
    assert vis.visible_count >= 4 and vis.level == 4 and vis.token == "4"


def test_walled_target_is_hidden():
    walls = [
        block(2, (6, -4, 0), (6.4, 4, 4)),
        block(3, (14, -4, 0), (14.4, 4, 4)),
        block(4, (6, -4, 0), (14.4, -3.6, 4)),
        block(5, (6, 3.6, 0), (14.4, 4, 4)),
    ]
    sc = SceneModel.from_objects([Plane(0, 0.0, True, 1)], [car(1, (10, 0, 0.8)), *walls])
    vis = compute_visibility(sc, PoseSE3(), 1, 0.0, LIDAR)
    assert vis.visible_count == 0 and vis.level == 1


def test_random_scenes_match_ray_oracle():
    rng = np.random.default_rng(0)
    levels = set()
    checked = 0
    while checked < 50:
        target = car(0, (rng.uniform(6, 16), rng.uniform(-6, 6), 0.8))
        tlo, thi = target.aabb()
        boxes = [target]
        for i in range(rng.integers(1, 6)):
            c = np.array([rng.uniform(2, 14), rng.uniform(-6, 6), rng.uniform(0.3, 1.5)])
            h = rng.uniform(0.2, 1.5, 3)
            lo, hi = c - h, c + h
            if np.all(lo < thi + 0.05) and np.all(hi > tlo - 0.05):
                continue
            if np.all(np.abs(ORIGIN - c) < h):
                continue
            boxes.append(block(i + 1, lo, hi))
        sc = SceneModel.from_objects([], boxes)
        got = compute_visibility(sc, PoseSE3(), 0, 0.0, LIDAR)
        assert got.visible_count == oracle_visible_count(boxes, target, ORIGIN)
        levels.add(got.level)
        checked += 1
    assert len(levels) >= 3


def test_visibility_invariant_under_rotation_about_sensor():
    rng = np.random.default_rng(1)
    boxes = [car(0, (10, 1, 0.8))] + [
        block(i + 1, c - 0.6, c + 0.6) for i, c in enumerate(rng.uniform([4, -3, 0.2], [8, 3, 1.2], (4, 3)))
    ]
    base = compute_visibility(SceneModel.from_objects([], boxes), PoseSE3(), 0, 0.0, LIDAR)
    turn = PoseSE3.from_rpy((0, 0, 0), yaw=90)
    turned = [
        Box(b.index, b.kind, b.tag, b.half_extents, pose=PoseSE3.from_rpy(turn.apply(b.pose.translation), yaw=b.pose.yaw + 90))
        for b in boxes
    ]
    rotated = compute_visibility(SceneModel.from_objects([], turned), PoseSE3.from_rpy((0, 0, 0), yaw=90), 0, 0.0, LIDAR)
    assert rotated.visible_count == base.visible_count


def test_adding_an_occluder_never_raises_visibility():
    rng = np.random.default_rng(2)
    target = car(0, (12, 0, 0.8))
    boxes = [target]
    prev = compute_visibility(SceneModel.from_objects([], boxes), PoseSE3(), 0, 0.0, LIDAR).visible_count
    for i in range(8):
        c = rng.uniform([3, -4, 0.3], [9, 4, 1.5])
        boxes.append(block(i + 1, c - 0.5, c + 0.5))
        n = compute_visibility(SceneModel.from_objects([], boxes), PoseSE3(), 0, 0.0, LIDAR).visible_count
        assert n <= prev
        prev = n


def test_degenerate_target_rejected():
    sc = SceneModel.from_objects([Plane(0, 0.0, True, 1)], [car(1, (5, 0, 0.8), half=(0.0, 1.0, 0.8))])
    with pytest.raises(ValueError):
        compute_visibility(sc, PoseSE3(), 1, 0.0, LIDAR)
    with pytest.raises(ValueError):
        compute_visibility(sc, PoseSE3(), 0, 0.0, LIDAR)


def test_keyframe_annotations():
    sc = build_parking_lot(SceneConfig(seed=0))
    t = 0.45
    ego = sc.ego_trajectory.pose_at(t)
    anns = annotate_keyframe(sc, ego, "s" * 32, t, instance_key="scene-0001")
    assert len(anns) == len(sc.cars)
    assert [a.object_index for a in anns] == sorted(a.object_index for a in anns)
    assert len({a.token for a in anns}) == len(anns) and all(is_token(a.token) for a in anns)
    assert all(is_token(a.instance_token) for a in anns)
    assert {a.attribute for a in anns} <= {"vehicle.moving", "vehicle.parked"}
    assert all(a.category_name == "vehicle.car" for a in anns)
    assert all(abs(np.linalg.norm(a.rotation) - 1) < 1e-12 for a in anns)
    with_static = annotate_keyframe(sc, ego, "s" * 32, t, include_static=True)
    assert len(with_static) == len(anns) + len(sc.boxes_of_kind("pillar"))
