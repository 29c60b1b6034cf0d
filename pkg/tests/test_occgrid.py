import numpy as np
import pytest

from conftest import wall_region
from parkocc.geom import PoseSE3, pose_inverse
from parkocc.occgrid import (
    UNOCCUPIED,
    GridSpec,
    GridSpecMismatchError,
    MalformedGridError,
    StageError,
    VoxelGrid,
    baseline_predict,
    build_dense_gt,
    decode_grid,
    encode_grid,
    export_grid_ply,
    load_grid,
    nearest_voxel,
    nn_label_transfer,
    observed_mask,
    save_grid,
    voxelize,
)
from parkocc.ply import read_ply_vertex_count
from parkocc.simworld import (
    Box,
    Plane,
    SceneModel,
    Trajectory,
    analytic_occupancy,
    build_occluded_wall,
    key_of,
    scan_sequence,
)
from parkocc.stitchfuse import LabeledCloud, aggregate_sequence, fuse_to_frame

SMALL = GridSpec(origin=(0.0, 0.0, 0.0), voxel_size=1.0, dims=(6, 5, 4))


def random_grid(spec, rng, p=0.3, labels=(17, 24, 28)):
    occ = rng.random(spec.dims) < p
    return VoxelGrid(spec, occ, rng.choice(labels, spec.dims))


# -- voxelize -----------------------------------------------------------------


def test_index_arithmetic():
    spec = GridSpec(origin=(-25.6, -25.6, -2.0), voxel_size=0.2, dims=(256, 256, 32))
    ijk, inside = spec.cell_indices([[0.0, 0.0, 0.0]])
    assert inside[0] and tuple(ijk[0]) == (128, 128, 10)


def test_default_grid_puts_ground_on_voxel_centres():
    spec = GridSpec()
    assert spec.dims == (256, 256, 32) and spec.voxel_size == 0.2
    ijk, _ = spec.cell_indices([[0.0, 0.0, -2.0]])
    assert np.allclose(spec.centers_of(ijk)[0, 2], -2.0)


def test_max_corner_is_dropped():
    g = voxelize(np.array([SMALL.upper, SMALL.upper - 1e-9]), np.array([17, 17]), SMALL)
    assert g.occupied_count == 1 and g.occupied[5, 4, 3]


def test_majority_label_with_low_tie_break():
    pts = np.array([[0.5, 0.5, 0.5]] * 5 + [[2.5, 0.5, 0.5]] * 2)
    g = voxelize(pts, np.array([17, 17, 28, 28, 28, 28, 17]), SMALL)
    assert g.occupied_count == 2
    assert g.labels[0, 0, 0] == 28 and g.labels[2, 0, 0] == 17
    same = voxelize(pts[:2], np.array([17, 17]), SMALL)
    assert same.occupied_count == 1 and same.labels[0, 0, 0] == 17


def test_voxelize_matches_inverse_lookup():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 7, (500, 3))
    lab = rng.choice([17, 24, 28], 500)
    g = voxelize(pts, lab, SMALL)
    assert g.occupied_count <= len(pts)
    cells = {}
    for p, l in zip(pts, lab):
        ijk = np.floor(p).astype(int)
        if np.all(ijk >= 0) and np.all(ijk < SMALL.dims):
            cells.setdefault(tuple(ijk), []).append(int(l))
    assert set(map(tuple, g.occupied_indices())) == set(cells)
    for ijk, ls in cells.items():
        counts = np.bincount(ls)
        assert g.labels[ijk] == int(np.argmax(counts))
    assert np.all(g.labels[~g.occupied] == UNOCCUPIED)


def test_voxelize_accepts_labeled_cloud():
    cloud = LabeledCloud([[0.5, 0.5, 0.5]], [24])
    assert voxelize(cloud, SMALL).labels[0, 0, 0] == 24


def test_grid_shape_validation():
    with pytest.raises(ValueError):
        GridSpec(voxel_size=0.0)
    with pytest.raises(ValueError):
        VoxelGrid(SMALL, np.zeros((2, 2, 2), bool))


# -- nearest-neighbour label transfer -----------------------------------------------


def brute_nn(dst, src):
    out = []
    for d in dst:
        d2 = ((src - d) ** 2).sum(axis=1)
        out.append(int(np.flatnonzero(d2 == d2.min())[0]))  # src rows are in linear-index order
    return np.array(out)


def test_nn_matches_exhaustive_search():
    spec = GridSpec((0, 0, 0), 1.0, (20, 20, 10))
    rng = np.random.default_rng(1)
    for trial in range(5):
        sem = random_grid(spec, rng, p=0.01)
        dense = VoxelGrid(spec, rng.random(spec.dims) < 0.5)
        dst = dense.occupied_indices()[:2000]
        src = sem.occupied_indices()
        assert np.array_equal(nearest_voxel(dst, src), brute_nn(dst, src))


def test_nn_tie_break_goes_to_lowest_index():
    src = np.array([[0, 0, 0], [2, 0, 0], [4, 0, 0], [0, 2, 0], [2, 2, 0]])
    src = src[np.lexsort(src.T[::-1])]
    dst = np.array([[1, 0, 0], [1, 1, 0], [3, 1, 0]])
    got = nearest_voxel(dst, src, k=1)
    assert np.array_equal(got, brute_nn(dst, src))


def test_two_clusters():
    spec = GridSpec((0, 0, 0), 1.0, (21, 3, 3))
    sem_occ = np.zeros(spec.dims, bool)
    sem_occ[0:2] = True
    sem_occ[19:] = True
    labels = np.where(np.arange(21)[:, None, None] < 10, 17, 28) * np.ones(spec.dims, int)
    sem = VoxelGrid(spec, sem_occ, labels)
    dense = VoxelGrid(spec, np.ones(spec.dims, bool))
    out = nn_label_transfer(dense, sem)
    src = sem.occupied_indices()
    ref = sem.labels[tuple(src[brute_nn(dense.occupied_indices(), src)].T)]
    assert np.array_equal(out.labels[dense.occupied], ref)
    assert out.labels[9, 1, 1] == 17 and out.labels[11, 1, 1] == 28
    assert out.labels[10, 1, 1] == 17  # equidistant: lower linear index wins


def test_nn_trivial_cases():
    rng = np.random.default_rng(2)
    sem = random_grid(SMALL, rng)
    out = nn_label_transfer(VoxelGrid(SMALL, sem.occupied), sem)
    assert out.same_as(sem)
    single = VoxelGrid.empty(SMALL)
    single.occupied[2, 2, 2] = True
    single.labels[2, 2, 2] = 28
    dense = VoxelGrid(SMALL, rng.random(SMALL.dims) < 0.5)
    assert np.all(nn_label_transfer(dense, single).labels[dense.occupied] == 28)
    with pytest.raises(ValueError):
        nn_label_transfer(dense, VoxelGrid.empty(SMALL))
    with pytest.raises(GridSpecMismatchError):
        nn_label_transfer(dense, VoxelGrid.empty(GridSpec()))


# -- container ---------------------------------------------------------------------


def test_container_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    for spec in (SMALL, GridSpec((-1.5, 2.0, -0.3), 0.4, (7, 1, 9))):
        g = random_grid(spec, rng)
        assert decode_grid(encode_grid(g)).same_as(g)
        assert load_grid(save_grid(g, tmp_path / "a" / "g.pocc")).same_as(g)
    full = VoxelGrid(SMALL, np.ones(SMALL.dims, bool), np.full(SMALL.dims, 24))
    assert decode_grid(encode_grid(full)).same_as(full)
    assert decode_grid(encode_grid(VoxelGrid.empty(SMALL))).same_as(VoxelGrid.empty(SMALL))


def test_container_header_layout():
    g = VoxelGrid.empty(SMALL)
    g.occupied[0, 0, 0] = True
    g.labels[0, 0, 0] = 17
    raw = encode_grid(g)
    assert raw[:4] == b"POCC" and raw[4:6] == b"\x01\x00"
    assert raw[-1] == 17


@pytest.mark.parametrize(
    "mangle",
    [
        lambda b: b"XOCC" + b[4:],
        lambda b: b[:4] + b"\x02\x00" + b[6:],
        lambda b: b[:-1],
        lambda b: b + b"\x00",
        lambda b: b[:30],
    ],
)
def test_malformed_containers(mangle):
    raw = encode_grid(random_grid(SMALL, np.random.default_rng(4)))
    with pytest.raises(MalformedGridError):
        decode_grid(mangle(raw))


def test_grid_ply_export(tmp_path):
    g = random_grid(SMALL, np.random.default_rng(5))
    path = export_grid_ply(g, tmp_path / "g.ply")
    assert read_ply_vertex_count(path) == g.occupied_count


# -- observed mask -------------------------------------------------------------------


def test_observed_mask_axis_ray():
    m = observed_mask(SMALL, (0.5, 0.5, 0.5), np.array([[4.5, 0.5, 0.5]]))
    assert np.array_equal(np.argwhere(m), [[i, 0, 0] for i in range(5)])


def test_observed_mask_clips_to_grid():
    m = observed_mask(SMALL, (-3.0, 2.5, 1.5), np.array([[10.0, 2.5, 1.5]]))
    assert m.sum() == 6 and m[:, 2, 1].all()
    assert not observed_mask(SMALL, (-3, -3, -3), np.array([[-1.0, -1.0, -1.0]])).any()


def test_observed_mask_matches_dense_sampling():
    rng = np.random.default_rng(6)
    origin = np.array([2.9, 2.3, 1.7])
    ends = rng.uniform(-2, 8, (200, 3))
    m = observed_mask(SMALL, origin, ends)
    for e in ends:
        s = np.linspace(0, 1, 4000)[:, None]
        ijk, ok = SMALL.cell_indices(origin + s * (e - origin))
        assert m[tuple(ijk[ok].T)].all()
    sampled = np.zeros(SMALL.dims, bool)
    for e in ends:
        s = np.linspace(0, 1, 4000)[:, None]
        ijk, ok = SMALL.cell_indices(origin + s * (e - origin))
        sampled[tuple(ijk[ok].T)] = True
    # the traversal may only add cells that the sampling grazed past
    assert (m & ~sampled).sum() <= 0.02 * m.sum()


# -- dense GT ------------------------------------------------------------------------


def moving_car_scene():
    floor = Plane(0, 0.0, True, 1, "floor")
    wall = Box(1, "wall", 4, np.array([20.0, 0.2, 1.5]), pose=PoseSE3(translation=(0.0, 6.2, 1.5)))
    traj = Trajectory(np.array([0.0, 10.0]), np.array([[-10.0, -4.0, 0.8], [10.0, -4.0, 0.8]]), np.array([0.0, 0.0]))
    car = Box(2, "dynamic_car", 14, np.array([2.2, 1.0, 0.8]), trajectory=traj)
    ego = Trajectory(np.array([0.0, 10.0]), np.array([[0.1, 0.1, 0.0], [0.1, 0.1, 0.0]]), np.array([0.0, 0.0]))
    return SceneModel.from_objects([floor], [wall, car], duration=10.0, ego_trajectory=ego)


@pytest.fixture(scope="module")
def car_frames():
    sc = moving_car_scene()
    times = 2.45 + 0.5 * np.arange(7)
    return sc, times, scan_sequence(sc, times)


@pytest.fixture(scope="module")
def car_gt(car_frames):
    _, _, frames = car_frames
    return build_dense_gt(frames, 3)


def test_moving_car_labeled_at_key_pose(car_frames, car_gt):
    sc, times, frames = car_frames
    k2w = frames[3].sensor_to_world
    car_only = sc.with_objects(planes=(), boxes=[sc.get(2)])
    oracle = analytic_occupancy(car_only, car_gt.spec, times[3], grid_pose=k2w).occupied
    # the contact layer's centres lie on the floor plane and belong to both solids
    above_floor = car_gt.spec.centers_of(np.array([[0, 0, k] for k in range(32)]))[:, 2] + k2w.translation[2] > 1e-6
    hit = car_gt.occupied & oracle & above_floor[None, None, :]
    assert hit.sum() > 50
    assert np.mean(car_gt.labels[hit] == 17) >= 0.95
    # no car-labeled voxel where the car was at the earlier frames
    stale = sc.get(2).pose_at(times[0])
    stale_local = pose_inverse(k2w).apply(stale.translation)
    ijk, ok = car_gt.spec.cell_indices([stale_local])
    assert ok[0] and car_gt.labels[tuple(ijk[0])] != 17


def test_gt_is_superset_of_sparse_and_conserves_labels(car_frames, car_gt):
    _, _, frames = car_frames
    agg = aggregate_sequence(frames)
    fused = fuse_to_frame(agg, key_of(frames[3]))
    sparse = voxelize(fused, car_gt.spec)
    assert np.all(car_gt.occupied >= sparse.occupied)
    assert car_gt.occupied_count > sparse.occupied_count
    assert car_gt.label_set() <= sparse.label_set()


def test_occluded_stripes_are_filled():
    sc = build_occluded_wall()
    times = [3.95, 4.45, 4.95]
    frames = scan_sequence(sc, times)
    spec = GridSpec()
    region = wall_region(sc, frames, 1, times[1], spec)
    assert region.sum() > 1000
    gt = build_dense_gt(frames, 1, spec)
    sparse = baseline_predict(frames[1].scan, spec)
    gt_cov = (gt.occupied & region).sum() / region.sum()
    sparse_cov = (sparse.occupied & region).sum() / region.sum()
    assert gt_cov >= 0.90 > sparse_cov


def test_key_index_and_stage_errors(car_frames):
    _, _, frames = car_frames
    with pytest.raises(IndexError):
        build_dense_gt(frames, 7)
    far = [type(f)(f.scan.subset(np.arange(len(f.scan)) < 20), f.ego_pose, f.sensor_pose, f.boxes) for f in frames[:1]]
    with pytest.raises(StageError) as info:
        build_dense_gt(far, 0)
    assert info.value.stage == "poisson"


# -- baseline ------------------------------------------------------------------------


def test_baseline_is_plain_voxelization(car_frames, car_gt):
    _, _, frames = car_frames
    scan = frames[3].scan
    assert baseline_predict(scan).same_as(voxelize(scan, GridSpec()))
    assert baseline_predict(LabeledCloud.empty()).occupied_count == 0
    assert baseline_predict(scan).occupied_count < car_gt.occupied_count
