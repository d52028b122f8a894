"""Propagating-front perturbations and non-focused boundary measurements.

A transducer at z emits spherical fronts; the induced conductivity
perturbation exponent is the radial derivative of a quartic bump mollifier,

    eta_{t,z}(x) = phi_w'(t - |x - z|) / (2 pi max(t, w)),

supported on the annulus |x-z| in [t-w, t+w].  Fronts are tapered to zero in
a thin collar along the cube boundary so that perturbed conductivities stay
admissible for the zero-Neumann forward solver; the same tapered field feeds
both the nonlinear-difference and the linearized measurement paths, keeping
them mutually consistent.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .fields import Grid, ScalarField, _spectral_diff
from .forward import (
    CurrentPattern,
    ForwardSolverError,
    _solve_correction,
    boundary_functional,
    check_sigma,
    grad_ln_sigma_of,
    solve_potential,
)

log = logging.getLogger(__name__)

DEFAULT_AMPLITUDE = 1e-3


@dataclass(frozen=True)
class TransducerArray:
    """Ring of point transducers around the square, with their front radii."""

    n_transducers: int = 256
    n_radii: int = 257
    ring_radius: float = 1.6
    mollifier_width: float = 0.012
    t_max: float | None = None

    def __post_init__(self):
        if self.ring_radius <= np.sqrt(2.0):
            raise ValueError("transducer ring must enclose the square (radius > sqrt(2))")
        if self.t_max is None:
            object.__setattr__(self, "t_max", 2.0 * self.ring_radius)
        if self.mollifier_width <= 0:
            raise ValueError("mollifier width must be positive")

    def centers(self) -> np.ndarray:
        ang = 2.0 * np.pi * np.arange(self.n_transducers) / self.n_transducers
        return self.ring_radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def radii(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_radii)

    @property
    def dt(self) -> float:
        return self.t_max / (self.n_radii - 1)


def default_array(grid: Grid, n_transducers: int = 256, n_radii: int = 257,
                  ring_radius: float = 1.6, width_cells: float = 3.0) -> TransducerArray:
    """Array with the mollifier width tied to the measurement grid spacing."""
    return TransducerArray(
        n_transducers=n_transducers,
        n_radii=n_radii,
        ring_radius=ring_radius,
        mollifier_width=width_cells * grid.h,
    )


@dataclass
class Sinogram:
    """Non-focused measurements, transducers x front radii."""

    array: np.ndarray
    pair: tuple
    geom: TransducerArray
    kind: str = "physical"

    def __post_init__(self):
        self.array = np.ascontiguousarray(self.array, dtype=np.float64)
        expected = (self.geom.n_transducers, self.geom.n_radii)
        if self.array.shape != expected:
            raise ValueError(f"sinogram shape {self.array.shape}, geometry wants {expected}")
        if not np.isfinite(self.array).all():
            raise ValueError("sinogram contains non-finite values")


def mollifier_deriv(s: np.ndarray, w: float) -> np.ndarray:
    """phi_w'(s) for the quartic bump phi_w(s) = 15/(16 w) (1-(s/w)^2)^2 on |s|<w."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    m = np.abs(s) < w
    sm = s[m]
    out[m] = -(15.0 / (4.0 * w**3)) * sm * (1.0 - (sm / w) ** 2)
    return out


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def boundary_window(grid: Grid, w: float) -> np.ndarray:
    """C2 taper: 0 on the outermost collar of the cube, 1 in the interior.

    Zero within 2h of the boundary (so perturbed conductivities keep sigma = 1
    on the checked node layers), ramping to 1 over max(2w, 4h).
    """
    h = grid.h
    mesh = grid.meshgrid()
    dist = 1.0 - np.maximum.reduce([np.abs(m) for m in mesh])
    ramp = max(2.0 * w, 4.0 * h)
    return _smoothstep((dist - 2.0 * h) / ramp)


def front_field(z, t: float, w: float, grid: Grid) -> ScalarField:
    """Front perturbation exponent sampled on the grid (boundary-tapered)."""
    if t <= 0 or w <= 0:
        raise ValueError("front radius and width must be positive")
    mesh = grid.meshgrid()
    r = np.sqrt(sum((m - zc) ** 2 for m, zc in zip(mesh, z)))
    eta = mollifier_deriv(t - r, w) / (2.0 * np.pi * max(t, w))
    return ScalarField(grid, eta * boundary_window(grid, w))


# ---------------------------------------------------------------------------
# linearized measurements: quadrature pairing of M_ij with every front
# ---------------------------------------------------------------------------

def measure_linearized(m_ij: ScalarField, array: TransducerArray, pair=(0, 0)) -> Sinogram:
    """Pair an interior field with every front: S[m,l] = int M(x) eta_{t_l,z_m}(x) dx."""
    grid = m_ij.grid
    if grid.dim != 2:
        raise ValueError("linearized sinogram measurement is 2D")
    w = array.mollifier_width
    dt = array.dt
    tt = array.radii()
    centers = array.centers()
    window = boundary_window(grid, w)
    weighted = (m_ij.values * window * grid.h**grid.dim).ravel()
    mesh = grid.meshgrid()
    xs, ys = mesh[0].ravel(), mesh[1].ravel()

    n_off = int(np.floor(2.0 * w / dt)) + 2
    out = np.zeros((array.n_transducers, array.n_radii))
    for m in range(array.n_transducers):
        r = np.sqrt((xs - centers[m, 0]) ** 2 + (ys - centers[m, 1]) ** 2)
        l0 = np.ceil((r - w) / dt).astype(int)
        row = out[m]
        for off in range(n_off):
            l = l0 + off
            ok = (l * dt < r + w) & (l >= 0) & (l < array.n_radii)
            if not ok.any():
                continue
            lv = l[ok]
            contrib = weighted[ok] * mollifier_deriv(lv * dt - r[ok], w)
            np.add.at(row, lv, contrib)
        row[1:] /= 2.0 * np.pi * np.maximum(tt[1:], w)
        row[0] /= 2.0 * np.pi * w
    return Sinogram(out, tuple(pair), array, kind="linearized")


# ---------------------------------------------------------------------------
# physical (nonlinear-difference) measurements
# ---------------------------------------------------------------------------

def _physical_rows(sigma_values, n, array, amplitude, tol, currents, m_indices):
    """Sinogram rows for a chunk of transducers; one perturbed solve per cell."""
    grid = Grid(2, n)
    sigma = ScalarField(grid, sigma_values)
    w = array.mollifier_width
    dt = array.dt
    tt = array.radii()
    centers = array.centers()
    window = boundary_window(grid, w)
    gls = grad_ln_sigma_of(sigma)

    base_sol = {i: solve_potential(sigma, CurrentPattern(i), tol) for i in currents}
    base_fun = {
        (i, j): boundary_functional(base_sol[i].u, CurrentPattern(j))
        for i in currents
        for j in (1, 2)
    }

    mesh = grid.meshgrid()
    rows = {}
    for m in m_indices:
        r = np.sqrt((mesh[0] - centers[m, 0]) ** 2 + (mesh[1] - centers[m, 1]) ** 2)
        row = {(i, j): np.zeros(array.n_radii) for i in currents for j in (1, 2)}
        warm = {i: base_sol[i].correction.values for i in currents}
        for l in range(array.n_radii):
            t = tt[l]
            if t <= 0:
                continue
            band = np.abs(t - r) < w
            if not band.any():
                continue
            eta = np.zeros(grid.shape)
            eta[band] = (
                mollifier_deriv(t - r[band], w)
                * window[band]
                / (2.0 * np.pi * max(t, w))
            )
            peak = float(np.abs(eta).max())
            if peak == 0.0:
                continue
            # normalize so the perturbation exponent peaks at `amplitude`;
            # only grad(ln sigma_p) = grad(ln sigma) + a*grad(eta) enters the
            # preconditioned solve
            a_eff = amplitude / peak
            gls_p = [gls[ax] + a_eff * _spectral_diff(eta, ax) for ax in range(2)]
            for i in currents:
                try:
                    v, _, _ = _solve_correction(gls_p, i, grid, tol, x0=warm[i])
                except ForwardSolverError as exc:
                    raise ForwardSolverError(
                        f"perturbed solve failed at transducer {m}, radius index {l}: {exc}",
                        residual=exc.residual,
                    ) from exc
                warm[i] = v
                xj = grid.coords().reshape([-1, 1] if i == 1 else [1, -1])
                u_p = ScalarField(grid, xj + v)
                for j in (1, 2):
                    val = boundary_functional(u_p, CurrentPattern(j)) - base_fun[(i, j)]
                    row[(i, j)][l] = val / a_eff
        rows[m] = row
    return rows


def measure_physical_all(
    sigma: ScalarField,
    array: TransducerArray,
    amplitude: float = DEFAULT_AMPLITUDE,
    tol: float = 1e-10,
    jobs: int = 1,
) -> dict:
    """Nonlinear-difference sinograms for all current pairs (1,1), (1,2), (2,2).

    For every front the conductivity is perturbed multiplicatively, the
    potentials are re-solved, and the change of the boundary functionals,
    divided by the perturbation amplitude, is stored.  Cells whose front
    misses the square are exactly zero.
    """
    if sigma.grid.dim != 2:
        raise ValueError("physical measurement simulation is 2D")
    check_sigma(sigma)
    currents = (1, 2)
    P = array.n_transducers
    if jobs > 1:
        chunks = [list(range(P))[k::jobs] for k in range(jobs)]
        rows = {}
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [
                pool.submit(
                    _physical_rows, sigma.values, sigma.grid.n, array, amplitude,
                    tol, currents, chunk,
                )
                for chunk in chunks if chunk
            ]
            for f in futs:
                rows.update(f.result())
    else:
        rows = _physical_rows(
            sigma.values, sigma.grid.n, array, amplitude, tol, currents, range(P)
        )

    out = {}
    for (i, j) in ((1, 1), (1, 2), (2, 2)):
        arr = np.zeros((P, array.n_radii))
        for m in range(P):
            arr[m] = rows[m][(i, j)]
        out[(i, j)] = Sinogram(arr, (i, j), array, kind="physical")
    return out


def measure_physical(
    sigma: ScalarField,
    currents: tuple,
    array: TransducerArray,
    amplitude: float = DEFAULT_AMPLITUDE,
    tol: float = 1e-10,
    jobs: int = 1,
) -> Sinogram:
    """Single-pair nonlinear-difference sinogram (see measure_physical_all)."""
    i, j = currents
    if (i, j) not in ((1, 1), (1, 2), (2, 1), (2, 2)):
        raise ValueError(f"unsupported current pair {currents}")
    key = (min(i, j), max(i, j))
    return measure_physical_all(sigma, array, amplitude, tol, jobs)[key]


# ---------------------------------------------------------------------------
# calibrated noise
# ---------------------------------------------------------------------------

def add_noise(s, level: float, seed: int):
    """Add Gaussian noise rescaled so that ||noise|| = level * ||signal|| exactly.

    Deterministic per seed (counter-based Philox stream); level 0 returns a
    bitwise-identical copy.
    """
    if level < 0:
        raise ValueError("noise level must be >= 0")

    def noisy(arr):
        if level == 0.0:
            return arr.copy()
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        noise = rng.standard_normal(arr.shape)
        nn = np.linalg.norm(noise)
        if nn == 0.0:
            return arr.copy()
        return arr + noise * (level * np.linalg.norm(arr) / nn)

    if isinstance(s, Sinogram):
        return replace(s, array=noisy(s.array))
    if isinstance(s, ScalarField):
        return ScalarField(s.grid, noisy(s.values))
    return noisy(np.asarray(s, dtype=np.float64))
