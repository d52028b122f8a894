"""Conductivity-equation forward solver, boundary functionals, power densities.

The potential for the canonical face current j is written u = x_j + v with v
solving div(sigma grad v) = -d(sigma)/dx_j under zero Neumann data (valid
because sigma = 1 near the boundary).  Dividing by sigma and inverting the
Neumann Laplacian turns this into the well-conditioned fixed-point form

    v = N[-grad(ln sigma) . (e_j + grad v)],   N = inverse Neumann Laplacian,

which is solved by GMRES with FFT-based operator applications (pseudospectral
in the cosine basis).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .fields import (
    Grid,
    ScalarField,
    _neumann_raw,
    _spectral_diff,
    rel_l2,
)
from .io import digest_array

log = logging.getLogger(__name__)

BOUNDARY_LAYERS = 2
BOUNDARY_TOL = 1e-12
DEFAULT_TOL = 1e-10
MAX_INNER_ITER = 500


class ForwardSolverError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class CurrentPattern:
    """Canonical face current: +1 on the face x_j = 1, -1 on x_j = -1, else 0."""

    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("current index is 1-based")


@dataclass
class PotentialSolution:
    u: ScalarField            # zero-mean potential x_j + v
    correction: ScalarField   # v alone; grad u = e_j + grad v
    current: CurrentPattern
    sigma_id: str
    residual: float


def _boundary_shell(values: np.ndarray, layers: int) -> np.ndarray:
    mask = np.zeros(values.shape, dtype=bool)
    for ax in range(values.ndim):
        sl = [slice(None)] * values.ndim
        sl[ax] = slice(0, layers)
        mask[tuple(sl)] = True
        sl[ax] = slice(-layers, None)
        mask[tuple(sl)] = True
    return values[mask]


def check_sigma(sigma: ScalarField) -> None:
    if sigma.values.min() <= 0.0:
        raise ForwardSolverError("conductivity must be positive everywhere")
    shell = _boundary_shell(sigma.values, BOUNDARY_LAYERS)
    dev = float(np.abs(shell - 1.0).max())
    if dev > BOUNDARY_TOL:
        raise ForwardSolverError(
            f"conductivity must equal 1 on the {BOUNDARY_LAYERS} outermost node "
            f"layers (max deviation {dev:.3e})"
        )


def _solve_correction(
    grad_ln_sigma: list,
    j: int,
    grid: Grid,
    tol: float,
    x0: np.ndarray | None = None,
):
    """Return (v, residual, residual_history) for current index j (1-based)."""
    dim, n = grid.dim, grid.n
    size = grid.size

    b = _neumann_raw(-grad_ln_sigma[j - 1])
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(grid.shape), 0.0, []

    def apply(vflat):
        v = vflat.reshape(grid.shape)
        dot = np.zeros_like(v)
        for ax in range(dim):
            dot += grad_ln_sigma[ax] * _spectral_diff(v, ax)
        return (v + _neumann_raw(dot)).ravel()

    op = LinearOperator((size, size), matvec=apply, dtype=np.float64)

    history = []

    def on_iter(pr_norm):
        if history:
            # residual is non-increasing over preconditioned GMRES iterations
            assert pr_norm <= history[-1] * (1.0 + 1e-9) + 1e-300, (
                f"GMRES residual increased: {history[-1]:.3e} -> {pr_norm:.3e}"
            )
        history.append(float(pr_norm))

    restart = min(100, size)
    maxiter = -(-MAX_INNER_ITER // restart)
    v, info = gmres(
        op,
        b.ravel(),
        x0=None if x0 is None else x0.ravel(),
        rtol=tol,
        atol=0.0,
        restart=restart,
        maxiter=maxiter,
        callback=on_iter,
        callback_type="pr_norm",
    )
    v = v.reshape(grid.shape)
    residual = float(np.linalg.norm(b - apply(v.ravel()).reshape(grid.shape)) / bnorm)
    if info != 0:
        raise ForwardSolverError(
            f"no convergence for current {j}: residual {residual:.3e} after "
            f"{MAX_INNER_ITER} inner iterations (tol {tol:.1e})",
            residual=residual,
        )
    return v, residual, history


def grad_ln_sigma_of(sigma: ScalarField) -> list:
    """Spectral gradient components of ln(sigma), as raw arrays."""
    ln_sigma = np.log(sigma.values)
    return [_spectral_diff(ln_sigma, ax) for ax in range(sigma.grid.dim)]


def solve_potential(
    sigma: ScalarField,
    current: CurrentPattern,
    tol: float = DEFAULT_TOL,
    x0: ScalarField | None = None,
) -> PotentialSolution:
    """Solve div(sigma grad u) = 0 with the canonical face current.

    The returned potential is normalized to zero mean; `correction` holds the
    deviation v = u - x_j whose cosine expansion underlies all derivative
    evaluations downstream.
    """
    grid = sigma.grid
    j = current.index
    if j > grid.dim:
        raise ValueError(f"current index {j} exceeds dimension {grid.dim}")
    check_sigma(sigma)
    gls = grad_ln_sigma_of(sigma)
    v, residual, _ = _solve_correction(
        gls, j, grid, tol, x0=None if x0 is None else x0.values
    )
    xj = grid.coords().reshape([-1 if ax == j - 1 else 1 for ax in range(grid.dim)])
    u = xj + v
    u -= u.mean()
    return PotentialSolution(
        u=ScalarField(grid, u),
        correction=ScalarField(grid, v),
        current=current,
        sigma_id=digest_array(sigma.values),
        residual=residual,
    )


def power_density(
    sigma: ScalarField, u_i: PotentialSolution, u_j: PotentialSolution
) -> ScalarField:
    """Interior power density sigma * grad(u_i) . grad(u_j)."""
    grid = sigma.grid
    if u_i.u.grid != grid or u_j.u.grid != grid:
        raise ValueError("potentials and conductivity must share one grid")
    out = np.zeros(grid.shape)
    for ax in range(grid.dim):
        gi = _spectral_diff(u_i.correction.values, ax)
        if ax == u_i.current.index - 1:
            gi += 1.0
        gj = _spectral_diff(u_j.correction.values, ax)
        if ax == u_j.current.index - 1:
            gj += 1.0
        out += gi * gj
    return ScalarField(grid, sigma.values * out)


def _face_weights(grid: Grid) -> np.ndarray:
    """Trapezoid quadrature weights for one face of the cube."""
    n, h = grid.n, grid.h
    w1 = np.full(n, h)
    w1[0] = w1[-1] = h / 2.0
    if grid.dim == 2:
        return w1
    return np.multiply.outer(w1, w1)


def boundary_functional(u: ScalarField, weight: CurrentPattern) -> float:
    """Boundary pairing of u with the +-1 face weight of the given pattern.

    Composite trapezoid quadrature over the two faces normal to e_j, the +1
    face minus the -1 face.
    """
    grid = u.grid
    j = weight.index
    if j > grid.dim:
        raise ValueError(f"weight index {j} exceeds dimension {grid.dim}")
    w = _face_weights(grid)
    ax = j - 1
    sl_hi = [slice(None)] * grid.dim
    sl_hi[ax] = -1
    sl_lo = [slice(None)] * grid.dim
    sl_lo[ax] = 0
    hi = u.values[tuple(sl_hi)]
    lo = u.values[tuple(sl_lo)]
    return float(np.sum(w * hi) - np.sum(w * lo))


def power_density_matrix(sigma: ScalarField, tol: float = DEFAULT_TOL) -> dict:
    """All power densities for the canonical currents of the grid dimension.

    Returns {(i, j): ScalarField} for 1 <= i <= j <= dim, from dim forward
    solves.  This is the benchmark data M^0 used by the reconstructions.
    """
    grid = sigma.grid
    sols = [solve_potential(sigma, CurrentPattern(j), tol) for j in range(1, grid.dim + 1)]
    out = {}
    for i in range(1, grid.dim + 1):
        for j in range(i, grid.dim + 1):
            out[(i, j)] = power_density(sigma, sols[i - 1], sols[j - 1])
    return out
