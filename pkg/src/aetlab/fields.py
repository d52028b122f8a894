"""Grids, sampled fields, trigonometric-basis derivatives and fast Poisson solvers.

Everything downstream (forward modeling, probing, focusing, reconstruction)
is built on the uniform Cartesian discretization of the cube [-1,1]^d and on
sine/cosine expansions of fields sampled on it.  Sine series diagonalize the
Dirichlet Laplacian on the cube, cosine series the Neumann one, so the two
Poisson solves below are exact on resolvable modes.

Axis arguments follow the coordinate naming x_1..x_d and are 1-based; array
storage is row-major with the last axis fastest, axes ordered (x_1,..,x_d).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

# Worker count handed to scipy.fft; >1 stays bitwise deterministic.
FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    global FFT_WORKERS
    FFT_WORKERS = max(1, int(n))


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on the cube [-1,1]^dim with n points per axis."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 9:
            raise ValueError(f"need n >= 9 points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 / (self.n - 1)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def coords(self) -> np.ndarray:
        """Node coordinates along one axis: x_k = -1 + k*h."""
        return -1.0 + self.h * np.arange(self.n)

    def meshgrid(self) -> tuple:
        """Full coordinate arrays, one per axis, each of shape grid.shape."""
        ax = self.coords()
        return np.meshgrid(*([ax] * self.dim), indexing="ij")


@dataclass
class ScalarField:
    """Real-valued function sampled at grid nodes."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("field contains non-finite values")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """dim scalar components sharing one grid."""

    grid: Grid
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("need one component per axis")
        comps = []
        for c in self.components:
            if isinstance(c, ScalarField):
                if c.grid != self.grid:
                    raise ValueError("components must share the grid")
                comps.append(c)
            else:
                comps.append(ScalarField(self.grid, c))
        self.components = tuple(comps)

    def arrays(self) -> tuple:
        return tuple(c.values for c in self.components)


def _check_axis(grid: Grid, axis: int) -> int:
    """Map the 1-based coordinate index to the numpy axis position."""
    if not 1 <= axis <= grid.dim:
        raise ValueError(f"axis must be in 1..{grid.dim}, got {axis}")
    return axis - 1


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def _spectral_diff(values: np.ndarray, ax: int) -> np.ndarray:
    """Raw-array cosine-basis derivative along numpy axis `ax`."""
    n = values.shape[ax]
    ndim = values.ndim
    a = _fft.dct(values, type=1, axis=ax, workers=FFT_WORKERS)
    # true coefficients: c_k = a_k/(n-1), except c_0 and c_{n-1} halved; the
    # k = n-1 sine term vanishes at every node so only k = 1..n-2 survive.
    k = np.arange(1, n - 1, dtype=np.float64)
    shape = [1] * ndim
    shape[ax] = n - 2
    sl = [slice(None)] * ndim
    sl[ax] = slice(1, n - 1)
    b = a[tuple(sl)] * ((-(np.pi / 2.0) / (n - 1)) * k).reshape(shape)
    interior = _fft.dst(b, type=1, axis=ax, workers=FFT_WORKERS) / 2.0
    out = np.zeros_like(values)
    out[tuple(sl)] = interior
    return out


def spectral_derivative(f: ScalarField, axis: int) -> ScalarField:
    """Differentiate along one axis through the cosine (even-extension) expansion.

    The field is expanded in cos(pi*k*(x+1)/2) along the axis; the derivative
    is the corresponding sine series, summed back at the nodes.  Exact for
    resolvable cosine modes.  By construction the result vanishes at the two
    faces normal to the axis, which matches every internal use (zero-Neumann
    potentials and interior-supported coefficients).
    """
    ax = _check_axis(f.grid, axis)
    return ScalarField(f.grid, _spectral_diff(f.values, ax))


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, tuple(spectral_derivative(f, j) for j in range(1, f.grid.dim + 1)))


def fd_derivative(f: ScalarField, axis: int, order: int = 1) -> ScalarField:
    """Second-order finite-difference derivative along one axis.

    Centered stencils in the interior, one-sided second-order stencils at the
    two boundary nodes.  order=1 gives d/dx, order=2 gives d^2/dx^2.
    """
    ax = _check_axis(f.grid, axis)
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if f.grid.n < 5:
        raise ValueError("finite differences need n >= 5")
    v = np.moveaxis(f.values, ax, 0)
    h = f.grid.h
    out = np.empty_like(v)
    if order == 1:
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    else:
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
        out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return ScalarField(f.grid, np.moveaxis(out, 0, ax))


def fd_mixed_derivative(f: ScalarField, axis_a: int, axis_b: int) -> ScalarField:
    """Mixed second derivative d^2/dx_a dx_b as a composition of first derivatives."""
    if axis_a == axis_b:
        return fd_derivative(f, axis_a, order=2)
    return fd_derivative(fd_derivative(f, axis_b, order=1), axis_a, order=1)


# ---------------------------------------------------------------------------
# fast Poisson solvers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _sine_eigenvalues(dim: int, n: int) -> np.ndarray:
    """-(pi*k/2)^2 summed over axes, k = 1..n-2 per axis (interior sine modes)."""
    k = np.arange(1, n - 1, dtype=np.float64)
    lam1 = -((np.pi * k / 2.0) ** 2)
    lam = np.zeros((n - 2,) * dim)
    for ax in range(dim):
        shape = [1] * dim
        shape[ax] = n - 2
        lam = lam + lam1.reshape(shape)
    lam.flags.writeable = False
    return lam


def _dirichlet_raw(values: np.ndarray) -> np.ndarray:
    ndim = values.ndim
    n = values.shape[0]
    core = (slice(1, n - 1),) * ndim
    coef = _fft.dstn(values[core], type=1, workers=FFT_WORKERS)
    coef /= _sine_eigenvalues(ndim, n)
    out = np.zeros_like(values)
    out[core] = _fft.idstn(coef, type=1, workers=FFT_WORKERS)
    return out


def poisson_dirichlet(rhs: ScalarField) -> ScalarField:
    """Solve lap(u) = rhs on the cube with u = 0 on the boundary.

    Diagonalization in the interior sine basis sin(pi*k*(x+1)/2); boundary
    values of the result are exactly zero.
    """
    return ScalarField(rhs.grid, _dirichlet_raw(rhs.values))


@lru_cache(maxsize=8)
def _cosine_eigenvalues(dim: int, n: int) -> np.ndarray:
    """-(pi*k/2)^2 summed over axes, k = 0..n-1 per axis.

    The constant-mode entry is set to 1 (its coefficient is zeroed before the
    division, so the value never matters).
    """
    k = np.arange(n, dtype=np.float64)
    lam1 = -((np.pi * k / 2.0) ** 2)
    lam = np.zeros((n,) * dim)
    for ax in range(dim):
        shape = [1] * dim
        shape[ax] = n
        lam = lam + lam1.reshape(shape)
    lam[(0,) * dim] = 1.0
    lam.flags.writeable = False
    return lam


def _neumann_raw(values: np.ndarray) -> np.ndarray:
    ndim = values.ndim
    n = values.shape[0]
    coef = _fft.dctn(values, type=1, workers=FFT_WORKERS)
    coef[(0,) * ndim] = 0.0
    coef /= _cosine_eigenvalues(ndim, n)
    u = _fft.idctn(coef, type=1, workers=FFT_WORKERS)
    u -= u.mean()
    return u


def poisson_neumann(rhs: ScalarField) -> ScalarField:
    """Solve lap(u) = rhs - mean(rhs) with du/dn = 0 on the cube boundary.

    Cosine-basis diagonalization; the constant mode of the right-hand side is
    projected out (compatibility) and the returned u has zero mean.
    """
    return ScalarField(rhs.grid, _neumann_raw(rhs.values))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def l2_norm(f) -> float:
    """Discrete L2 norm with the sqrt(h^dim) quadrature weight for grid fields.

    Plain vector 2-norm for bare arrays (sinograms and the like), where no
    geometric weight applies.
    """
    if isinstance(f, ScalarField):
        return float(np.sqrt(f.grid.h**f.grid.dim) * np.linalg.norm(f.values))
    return float(np.linalg.norm(np.asarray(f, dtype=np.float64)))


def _raw(x) -> np.ndarray:
    if isinstance(x, ScalarField):
        return x.values
    if hasattr(x, "array"):  # Sinogram
        return x.array
    return np.asarray(x, dtype=np.float64)


def rel_l2(a, b) -> float:
    """||a - b||_2 / ||b||_2 over matching samples (weights cancel)."""
    av, bv = _raw(a), _raw(b)
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    denom = np.linalg.norm(bv)
    if denom == 0.0:
        raise ZeroDivisionError("reference field has zero norm")
    return float(np.linalg.norm(av - bv) / denom)


def restrict(f: ScalarField, coarse: Grid) -> ScalarField:
    """Restrict to a coarser grid by node subsampling.

    Requires the coarse nodes to be a subset of the fine ones, i.e.
    (n_fine - 1) divisible by (n_coarse - 1).
    """
    if coarse.dim != f.grid.dim:
        raise ValueError("dimension mismatch")
    stride, rem = divmod(f.grid.n - 1, coarse.n - 1)
    if rem != 0:
        raise ValueError(
            f"cannot subsample n={f.grid.n} onto n={coarse.n}: nodes do not nest"
        )
    sl = (slice(None, None, stride),) * f.grid.dim
    return ScalarField(coarse, f.values[sl].copy())
