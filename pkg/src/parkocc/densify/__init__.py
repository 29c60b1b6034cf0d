"""Normals, grid Poisson reconstruction and mesh densification."""

from .cg import (
    CGNotConvergedError,
    CGResult,
    conjugate_gradient,
    dirichlet_laplacian,
    neumann_laplacian,
    solve_neumann_poisson,
)
from .mesh import TriMesh, densify_mesh
from .normals import OrientedPointCloud, estimate_normals
from .poisson import MIN_POINTS, PoissonConfig, PoissonError, poisson_reconstruct
