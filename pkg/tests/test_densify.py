import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree
from skimage.measure import marching_cubes

from conftest import fibonacci_sphere
from parkocc.densify import (
    CGNotConvergedError,
    OrientedPointCloud,
    PoissonConfig,
    PoissonError,
    TriMesh,
    conjugate_gradient,
    densify_mesh,
    dirichlet_laplacian,
    estimate_normals,
    neumann_laplacian,
    poisson_reconstruct,
    solve_neumann_poisson,
)


def laplacian_1d(n, h, neumann):
    main = np.full(n, 2.0)
    if neumann:
        main[0] = main[-1] = 1.0
    return sparse.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]) / (h * h)


def laplacian_3d(n, h, neumann=False):
    a, i = laplacian_1d(n, h, neumann), sparse.identity(n)
    return (sparse.kron(sparse.kron(a, i), i) + sparse.kron(sparse.kron(i, a), i) + sparse.kron(sparse.kron(i, i), a)).tocsr()


def sphere_cloud(n=2000, radius=1.0):
    pts = fibonacci_sphere(n, radius)
    return OrientedPointCloud(pts, pts / radius)


# -- conjugate gradients -------------------------------------------------------


def test_cg_solves_separable_problem_at_64():
    n = 64
    h = 1.0 / (n + 1)
    x = np.arange(1, n + 1) * h
    s = np.sin(np.pi * x)
    exact = s[:, None, None] * s[None, :, None] * s[None, None, :]
    b = 3 * np.pi**2 * exact
    res = conjugate_gradient(dirichlet_laplacian((n, n, n), h), b.ravel(), tol=1e-6)
    assert res.converged and res.residual <= 1e-6
    err = np.linalg.norm(res.x - exact.ravel()) / np.linalg.norm(exact)
    assert err <= 1e-3


def test_cg_polynomial_problem_needs_many_iterations():
    # Second differences are exact on quadratics, so the grid solution equals the analytic one.
    n = 64
    h = 1.0 / (n + 1)
    x = np.arange(1, n + 1) * h
    q = x * (1 - x)
    exact = q[:, None, None] * q[None, :, None] * q[None, None, :]
    b = 2 * (q[None, :, None] * q[None, None, :] + q[:, None, None] * q[None, None, :] + q[:, None, None] * q[None, :, None])
    res = conjugate_gradient(dirichlet_laplacian((n, n, n), h), b.ravel(), tol=1e-8)
    assert res.iterations > 20
    assert np.linalg.norm(res.x - exact.ravel()) / np.linalg.norm(exact) <= 1e-6


def test_dirichlet_operator_matches_sparse_matrix():
    n, h = 6, 0.3
    v = np.random.default_rng(0).normal(size=n**3)
    assert np.allclose(dirichlet_laplacian((n, n, n), h)(v), laplacian_3d(n, h) @ v)


def test_cg_matches_direct_solve():
    n, h = 10, 0.1
    b = np.random.default_rng(1).normal(size=n**3)
    ref = spsolve(laplacian_3d(n, h).tocsc(), b)
    got = conjugate_gradient(dirichlet_laplacian((n, n, n), h), b, tol=1e-10, max_iter=5000).x
    assert np.allclose(got, ref, rtol=1e-7, atol=1e-9)


def test_neumann_solvers_agree_with_direct_solve():
    n, h = 8, 0.5
    b = np.random.default_rng(2).normal(size=(n, n, n))
    b -= b.mean()
    a = laplacian_3d(n, h, neumann=True)
    v = np.random.default_rng(3).normal(size=n**3)
    assert np.allclose(neumann_laplacian((n, n, n), h)(v), a @ v)
    # Pin the null space by adding the mean as an extra constraint.
    ones = np.ones((n**3, 1)) / n**3
    ref = np.linalg.solve(a.toarray() + ones @ np.ones((1, n**3)), b.ravel())
    compiled = solve_neumann_poisson(b, h, tol=1e-10).x.ravel()
    generic = conjugate_gradient(neumann_laplacian((n, n, n), h), b.ravel(), tol=1e-10, project_mean=True).x
    assert np.allclose(compiled, ref, atol=1e-8) and np.allclose(generic, ref, atol=1e-8)


def test_cg_reports_non_convergence():
    n, h = 16, 1.0 / 17
    b = np.ones(n**3)
    with pytest.raises(CGNotConvergedError) as info:
        conjugate_gradient(dirichlet_laplacian((n, n, n), h), b, max_iter=3)
    assert info.value.iterations == 3 and info.value.residual > 1e-6
    res = conjugate_gradient(dirichlet_laplacian((n, n, n), h), b, max_iter=3, raise_on_failure=False)
    assert not res.converged


def test_cg_zero_rhs():
    res = conjugate_gradient(dirichlet_laplacian((4, 4), 1.0), np.zeros(16))
    assert res.iterations == 0 and not res.x.any()


# -- normals -------------------------------------------------------------------


def test_plane_normals_point_to_sensor():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-5, 5, (500, 2)), np.zeros(500)])
    oc = estimate_normals(pts, k=10, sensor_origin=(0, 0, 2))
    assert np.max(np.abs(oc.normals - [0, 0, 1])) < 1e-3
    below = estimate_normals(pts, k=10, sensor_origin=(0, 0, -2))
    assert np.allclose(below.normals, [0, 0, -1], atol=1e-3)


def test_sphere_normals_are_radial():
    pts = fibonacci_sphere(2000)
    oc = estimate_normals(pts, k=10, sensor_origin=(0, 0, 0))
    # sensor at the centre: normals face inward
    cosang = np.einsum("ij,ij->i", oc.normals, -pts)
    assert np.degrees(np.arccos(np.clip(cosang, -1, 1))).max() < 5.0


def test_normals_oriented_by_per_point_origins():
    pts = fibonacci_sphere(800)

    class Cloud:
        points = pts
        origins = 3 * pts  # each point seen from outside along its radius

    oc = estimate_normals(Cloud(), k=10)
    assert np.all(np.einsum("ij,ij->i", oc.normals, pts) > 0.99)


def test_collinear_points_get_zero_confidence():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    oc = estimate_normals(pts, k=3, sensor_origin=(0, 5, 0))
    assert np.all(oc.confidence == 0)
    with pytest.raises(ValueError):
        estimate_normals(pts[:3], k=3)
    with pytest.raises(ValueError):
        estimate_normals(pts, k=2)


def test_oriented_cloud_requires_unit_normals():
    with pytest.raises(ValueError):
        OrientedPointCloud(np.zeros((1, 3)), [[0, 0, 2.0]])


# -- Poisson reconstruction --------------------------------------------------------


@pytest.fixture(scope="module")
def sphere_mesh():
    return poisson_reconstruct(sphere_cloud(), PoissonConfig(resolution=64))


def test_sphere_reconstruction_rms(sphere_mesh):
    r = np.linalg.norm(sphere_mesh.vertices, axis=1)
    assert np.sqrt(np.mean((r - 1.0) ** 2)) <= 0.05


def test_sphere_reconstruction_rms_default_resolution():
    mesh = poisson_reconstruct(sphere_cloud())
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.sqrt(np.mean((r - 1.0) ** 2)) <= 0.05


def test_plane_patch_reconstruction():
    g = np.linspace(-2, 2, 41)
    xy = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    top = np.column_stack([xy, np.zeros(len(xy))])
    oc = OrientedPointCloud(top, np.tile([0, 0, 1.0], (len(top), 1)))
    mesh = poisson_reconstruct(oc, PoissonConfig(resolution=64, trim=0.1))
    v = mesh.vertices
    inside = np.all(np.abs(v[:, :2]) <= 2.0, axis=1)
    assert inside.sum() > 100
    assert np.abs(v[inside, 2]).max() <= 0.02


def test_too_few_points():
    pts = fibonacci_sphere(10)
    with pytest.raises(ValueError, match="at least"):
        poisson_reconstruct(OrientedPointCloud(pts, pts))


def test_reconstruction_is_translation_equivariant(sphere_mesh):
    t = np.array([12.3, -4.5, 0.7])
    cloud = sphere_cloud()
    moved = poisson_reconstruct(OrientedPointCloud(cloud.points + t, cloud.normals), PoissonConfig(resolution=64))
    assert len(moved.vertices) == len(sphere_mesh.vertices)
    d, _ = cKDTree(sphere_mesh.vertices + t).query(moved.vertices)
    assert d.max() <= 1e-6


def test_poisson_reports_cg_failure():
    with pytest.raises(PoissonError, match="residual"):
        poisson_reconstruct(sphere_cloud(500), PoissonConfig(resolution=32, max_iter=2))


def test_tiled_reconstruction_covers_samples():
    cloud = sphere_cloud(3000, radius=2.0)
    mesh = poisson_reconstruct(cloud, PoissonConfig(resolution=16, cell_size=0.1, trim=0.3))
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.sqrt(np.mean((r - 2.0) ** 2)) <= 0.05
    d, _ = cKDTree(mesh.vertices).query(cloud.points)
    assert d.max() < 0.2


def test_marching_cubes_on_sphere_distance_field():
    h = 0.05
    g = np.arange(-1.5, 1.5 + h / 2, h)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    sdf = np.sqrt(x**2 + y**2 + z**2) - 1.0
    verts, faces, _, _ = marching_cubes(sdf, level=0.0, spacing=(h, h, h))
    r = np.linalg.norm(verts + g[0], axis=1)
    assert np.all(np.abs(r - 1.0) <= 1.5 * h)


# -- densify_mesh ----------------------------------------------------------------


def equilateral(edge=1.0):
    v = np.array([[0, 0, 0], [edge, 0, 0], [edge / 2, edge * np.sqrt(3) / 2, 0]])
    return TriMesh(v, [[0, 1, 2]])


def test_single_triangle_spacing():
    pts = densify_mesh(equilateral(), 0.25)
    d, _ = cKDTree(pts).query(pts, k=2)
    assert d[:, 1].max() <= 0.25 + 1e-12
    assert len(pts) == 15
    assert np.array_equal(pts[:3], equilateral().vertices)


def test_fine_mesh_unchanged():
    m = equilateral(0.1)
    assert np.array_equal(densify_mesh(m, 0.25), m.vertices)
    with pytest.raises(ValueError):
        densify_mesh(m, 0.0)


def test_shared_edges_are_deduplicated():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
    pts = densify_mesh(TriMesh(v, [[0, 1, 2], [1, 3, 2]]), 0.5)
    key = np.round(pts / 1e-9).astype(np.int64)
    assert len(np.unique(key, axis=0)) == len(pts)
    assert len(pts) == 25


def test_sphere_mesh_coverage():
    h = 0.25
    g = np.arange(-1.5, 1.5 + h / 2, h)
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    verts, faces, _, _ = marching_cubes(np.sqrt(x**2 + y**2 + z**2) - 1.0, 0.0, spacing=(h, h, h))
    mesh = TriMesh(verts + g[0], faces)
    assert mesh.edge_lengths().max() > 0.1
    pts = densify_mesh(mesh, 0.1)
    probes = np.random.default_rng(0).normal(size=(1000, 3))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    d, _ = cKDTree(pts).query(probes)
    assert d.max() <= 0.1


def test_mesh_rejects_bad_indices():
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 3]])
