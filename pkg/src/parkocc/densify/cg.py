"""Conjugate gradients over an implicit operator, plus 7-point grid Laplacians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit


class CGNotConvergedError(RuntimeError):
    def __init__(self, iterations: int, residual: float, tol: float):
        super().__init__(f"CG did not reach relative residual {tol:g} in {iterations} iterations (got {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # ||b - A x|| / ||b||
    converged: bool


def conjugate_gradient(
    matvec: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-6,
    max_iter: int = 2000,
    project_mean: bool = False,
    raise_on_failure: bool = True,
) -> CGResult:
    """Solve ``A x = b`` for symmetric positive (semi-)definite ``A``.

    With ``project_mean`` the constant vector is treated as the null space
    (pure Neumann problems): ``b`` and the iterates are kept mean-free.
    """
    b = np.asarray(b, np.float64)
    if project_mean:
        b = b - b.mean()
    x = np.zeros_like(b) if x0 is None else np.array(x0, np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0, True)
    it = 0
    while True:
        # (Re)start from the true residual; a restart happens only if rounding made
        # the recursive residual optimistic.
        r = b - matvec(x)
        if project_mean:
            r -= r.mean()
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol or it >= max_iter:
            break
        p = r.copy()
        rr = float(np.vdot(r, r))
        while np.sqrt(rr) / bnorm > tol and it < max_iter:
            ap = matvec(p)
            alpha = rr / float(np.vdot(p, ap))
            x += alpha * p
            r -= alpha * ap
            if project_mean:
                r -= r.mean()
            rr_new = float(np.vdot(r, r))
            p *= rr_new / rr
            p += r
            rr = rr_new
            it += 1
    if project_mean:
        x -= x.mean()
    converged = res <= tol
    if not converged and raise_on_failure:
        raise CGNotConvergedError(it, res, tol)
    return CGResult(x, it, res, converged)


def dirichlet_laplacian(shape: tuple[int, ...], h: float) -> Callable[[np.ndarray], np.ndarray]:
    """``-Δ`` on cell values with zero values outside the grid."""
    inv = 1.0 / (h * h)
    ndim = len(shape)

    def matvec(x: np.ndarray) -> np.ndarray:
        u = x.reshape(shape)
        out = 2.0 * ndim * u
        for ax in range(ndim):
            lo = [slice(None)] * ndim
            hi = [slice(None)] * ndim
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            out[tuple(lo)] -= u[tuple(hi)]
            out[tuple(hi)] -= u[tuple(lo)]
        return (out * inv).reshape(x.shape)

    return matvec


@njit(cache=True)
def _neumann3(u, inv, out):  # pragma: no cover - compiled
    nx, ny, nz = u.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = u[i, j, k]
                acc = 0.0
                if i > 0:
                    acc += c - u[i - 1, j, k]
                if i < nx - 1:
                    acc += c - u[i + 1, j, k]
                if j > 0:
                    acc += c - u[i, j - 1, k]
                if j < ny - 1:
                    acc += c - u[i, j + 1, k]
                if k > 0:
                    acc += c - u[i, j, k - 1]
                if k < nz - 1:
                    acc += c - u[i, j, k + 1]
                out[i, j, k] = acc * inv


def neumann_laplacian(shape: tuple[int, ...], h: float) -> Callable[[np.ndarray], np.ndarray]:
    """``-Δ`` with zero flux through the grid boundary (null space: constants)."""
    inv = 1.0 / (h * h)
    ndim = len(shape)
    if ndim == 3:

        def matvec3(x: np.ndarray) -> np.ndarray:
            out = np.empty(shape)
            _neumann3(np.ascontiguousarray(x.reshape(shape)), inv, out)
            return out.reshape(x.shape)

        return matvec3

    def matvec(x: np.ndarray) -> np.ndarray:
        u = x.reshape(shape)
        out = np.zeros_like(u)
        for ax in range(ndim):
            lo = [slice(None)] * ndim
            hi = [slice(None)] * ndim
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            d = u[tuple(hi)] - u[tuple(lo)]
            out[tuple(lo)] -= d
            out[tuple(hi)] += d
        return (out * inv).reshape(x.shape)

    return matvec


@njit(cache=True)
def _cg_neumann3_kernel(b, x, inv, tol, max_iter):  # pragma: no cover - compiled
    n = b.size
    bf = b.ravel()
    xf = x.ravel()
    r3 = np.empty_like(b)
    ap3 = np.empty_like(b)
    rf = r3.ravel()
    apf = ap3.ravel()
    _neumann3(x, inv, ap3)
    s = 0.0
    bb = 0.0
    for i in range(n):
        rf[i] = bf[i] - apf[i]
        s += rf[i]
        bb += bf[i] * bf[i]
    m = s / n
    rr = 0.0
    for i in range(n):
        rf[i] -= m
        rr += rf[i] * rf[i]
    bnorm = np.sqrt(bb)
    p3 = r3.copy()
    pf = p3.ravel()
    it = 0
    while np.sqrt(rr) / bnorm > tol and it < max_iter:
        _neumann3(p3, inv, ap3)
        pap = 0.0
        for i in range(n):
            pap += pf[i] * apf[i]
        alpha = rr / pap
        s = 0.0
        for i in range(n):
            xf[i] += alpha * pf[i]
            rf[i] -= alpha * apf[i]
            s += rf[i]
        m = s / n
        rr_new = 0.0
        for i in range(n):
            rf[i] -= m
            rr_new += rf[i] * rf[i]
        beta = rr_new / rr
        for i in range(n):
            pf[i] = rf[i] + beta * pf[i]
        rr = rr_new
        it += 1
    return it


def solve_neumann_poisson(
    b: np.ndarray, h: float, tol: float = 1e-6, max_iter: int = 2000, raise_on_failure: bool = True
) -> CGResult:
    """Compiled CG for ``-Δ x = b`` on a 3-D grid with zero-flux boundaries.

    Same iteration as :func:`conjugate_gradient` with ``project_mean=True``.
    """
    b = np.ascontiguousarray(b, np.float64)
    if b.ndim != 3:
        raise ValueError("b must be a 3-D array")
    b = b - b.mean()
    if not np.any(b):
        return CGResult(np.zeros_like(b), 0, 0.0, True)
    x = np.zeros_like(b)
    inv = 1.0 / (h * h)
    bnorm = float(np.linalg.norm(b))
    it = 0
    while True:
        it += _cg_neumann3_kernel(b, x, inv, tol, max_iter - it)
        ax = np.empty_like(b)
        _neumann3(x, inv, ax)
        r = b - ax
        res = float(np.linalg.norm(r - r.mean())) / bnorm
        if res <= tol or it >= max_iter:
            break
    x -= x.mean()
    converged = res <= tol
    if not converged and raise_on_failure:
        raise CGNotConvergedError(it, res, tol)
    return CGResult(x, it, res, converged)
