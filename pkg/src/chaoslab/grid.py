"""One-dimensional uniform-grid densities, quadrature and singular convolution.

Densities are piecewise constant: ``values[k]`` is the cell average on
``[lo + k h, lo + (k+1) h]``. Convolutions against such densities are exact
because every kernel in :mod:`chaoslab.kernels` ships closed-form first and
second antiderivatives. Two discrete convolution operators are exposed:

* point values at cell centres, ``(g*mu)(x_k)``  (``cell_average=False``)
* cell averages, ``h^-1 int_{cell k} (g*mu)``    (``cell_average=True``)

The second one is the first variation of :func:`double_integral`, and is the
operator used by every density-level solver in the package so that discrete
equilibria are exact fixed points of the discrete free energy.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz

from .errors import UnsupportedKernelError
from .kernels import KernelSpec

EPS_FLOOR = 1e-14


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n_cells: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("grid requires lo < hi")
        if int(self.n_cells) != self.n_cells or self.n_cells < 16:
            raise ValueError("grid requires an integer n_cells >= 16")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return self.lo + np.arange(self.n_cells + 1) * self.h

    def refine(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.lo, self.hi, self.n_cells * factor)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "n_cells": self.n_cells}


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridField:
    """A scalar field sampled at cell centres."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n_cells,):
            raise ValueError("field length does not match the grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridField values must be finite")
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        """Linear interpolation between cell centres (constant beyond them)."""
        return np.interp(x, self.grid.centers, self.values)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """A probability density, piecewise constant on ``grid``."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n_cells,):
            raise ValueError("density length does not match the grid")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite and nonnegative")
        mass = self.grid.h * vals.sum()
        if abs(mass - 1.0) > 1e-12:
            raise ValueError(f"density mass {mass!r} differs from 1 by more than 1e-12")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, grid: Grid1D, values) -> "GridDensity":
        """Normalise arbitrary nonnegative values into a density."""
        vals = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = grid.h * vals.sum()
        if not total > 0:
            raise ValueError("cannot normalise a density with zero mass")
        return cls(grid, vals / total)

    @classmethod
    def from_function(cls, grid: Grid1D, fn, n_sub: int = 8) -> "GridDensity":
        """Cell averages of ``fn`` by ``n_sub``-point Gauss-Legendre per cell, then normalised."""
        nodes, weights = np.polynomial.legendre.leggauss(n_sub)
        x = grid.centers[:, None] + 0.5 * grid.h * nodes[None, :]
        vals = (np.asarray(fn(x), dtype=float) * weights).sum(axis=1) / 2.0
        return cls.from_values(grid, vals)

    @classmethod
    def uniform(cls, grid: Grid1D, a: float, b: float) -> "GridDensity":
        """Uniform density on [a, b]; exact when a and b are cell edges."""
        edges = grid.edges
        overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
        return cls.from_values(grid, overlap / grid.h)

    @property
    def sup_norm(self) -> float:
        return float(self.values.max())

    @property
    def mass(self) -> float:
        return float(self.grid.h * self.values.sum())

    @property
    def cell_masses(self) -> np.ndarray:
        return self.grid.h * self.values

    def mean(self) -> float:
        return float(np.sum(self.cell_masses * self.grid.centers))

    def variance(self) -> float:
        """Exact variance of the piecewise-constant density."""
        c = self.grid.centers
        m2 = np.sum(self.cell_masses * (c**2 + self.grid.h**2 / 12.0))
        return float(m2 - self.mean() ** 2)

    def __call__(self, x):
        """Pointwise value of the piecewise-constant density (0 outside the window)."""
        x = np.asarray(x, dtype=float)
        g = self.grid
        idx = np.floor((x - g.lo) / g.h).astype(np.int64)
        inside = (idx >= 0) & (idx < g.n_cells)
        out = np.where(inside, self.values[np.clip(idx, 0, g.n_cells - 1)], 0.0)
        return out[()] if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw iid samples: a cell by its mass, then a uniform point inside it."""
        cdf = np.cumsum(self.cell_masses)
        cdf /= cdf[-1]
        u = rng.random(size)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), self.grid.n_cells - 1)
        return self.grid.edges[idx] + self.grid.h * rng.random(size)

    def cdf_at_edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.cell_masses)])

    # -- serialisation --------------------------------------------------
    def to_csv(self, path) -> None:
        data = np.column_stack([self.grid.centers, self.values])
        np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "GridDensity":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x, vals = data[:, 0], data[:, 1]
        h = x[1] - x[0]
        grid = Grid1D(float(x[0] - h / 2), float(x[-1] + h / 2), len(x))
        return cls.from_values(grid, vals)

    def save(self, path) -> None:
        """Binary snapshot with grid metadata (``.npz``)."""
        np.savez(path, lo=self.grid.lo, hi=self.grid.hi, n_cells=self.grid.n_cells, values=self.values)

    @classmethod
    def load(cls, path) -> "GridDensity":
        with np.load(path) as data:
            grid = Grid1D(float(data["lo"]), float(data["hi"]), int(data["n_cells"]))
            return cls(grid, data["values"])


# ---------------------------------------------------------------------------
# kernel tables
# ---------------------------------------------------------------------------

def _check_supported(spec: KernelSpec) -> None:
    if spec.d != 1:
        raise UnsupportedKernelError("grid convolution is one-dimensional only")
    if spec.family == "riesz" and spec.s >= 1.0:
        raise UnsupportedKernelError(f"riesz s={spec.s} >= 1 is not locally integrable in d=1")


@lru_cache(maxsize=64)
def _center_table(spec: KernelSpec, h: float, n: int) -> np.ndarray:
    """W_m = int over the cell at offset m of phi(|x_k - y|) dy, for m = 0..n-1."""
    m = np.arange(n) * h
    out = spec.antiderivative(m + h / 2) - spec.antiderivative(m - h / 2)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _pair_table(spec: KernelSpec, h: float, n: int) -> np.ndarray:
    """P_m = int_{cell i} int_{cell j} phi(|x - y|), m = |i - j| = 0..n-1."""
    m = np.arange(n) * h
    B = spec.antiderivative2
    out = B(m + h) - 2.0 * B(m) + B(m - h)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=16)
def _virial_pair_table(spec: KernelSpec, h: float, n: int) -> np.ndarray:
    m = np.arange(n) * h
    C = spec.virial_antiderivative2
    out = C(m + h) - 2.0 * C(m) + C(m - h)
    out.setflags(write=False)
    return out


def virial_pair_average(spec: KernelSpec, grid: Grid1D) -> np.ndarray:
    """Average of r phi'(r), r = |x - y|, over every cell x cell square."""
    _check_supported(spec)
    return toeplitz(_virial_pair_table(spec, grid.h, grid.n_cells)) / grid.h**2


def virial_point_integrals(spec: KernelSpec, grid: Grid1D, x) -> np.ndarray:
    """Rows of int_{cell b} r phi'(r) dy with r = |x_i - y|, shape (len(x), n_cells)."""
    _check_supported(spec)
    u = np.asarray(x, dtype=float).reshape(-1, 1) - grid.edges.reshape(1, -1)
    C = spec.virial_antiderivative(u)
    return C[:, :-1] - C[:, 1:]


def center_table(spec: KernelSpec, grid: Grid1D) -> np.ndarray:
    _check_supported(spec)
    return _center_table(spec, grid.h, grid.n_cells)


def pair_table(spec: KernelSpec, grid: Grid1D) -> np.ndarray:
    _check_supported(spec)
    return _pair_table(spec, grid.h, grid.n_cells)


@lru_cache(maxsize=16)
def _toeplitz(kind: str, spec: KernelSpec, h: float, n: int) -> np.ndarray:
    if kind == "center":
        out = toeplitz(_center_table(spec, h, n))
    else:
        # "pair": raw cell-pair integrals, "cell": divided by h, "square": by h^2
        scale = {"pair": 1.0, "cell": h, "square": h * h}[kind]
        out = toeplitz(_pair_table(spec, h, n)) / scale
    out.setflags(write=False)
    return out


def convolution_matrix(spec: KernelSpec, grid: Grid1D, cell_average: bool = False) -> np.ndarray:
    """Matrix M with (M @ mu.values)[k] = (g*mu) at cell k."""
    _check_supported(spec)
    if cell_average:
        return _toeplitz("cell", spec, grid.h, grid.n_cells)
    return _toeplitz("center", spec, grid.h, grid.n_cells)


def pair_average_matrix(spec: KernelSpec, grid: Grid1D) -> np.ndarray:
    """Average of g over each cell x cell square, finite on the diagonal."""
    _check_supported(spec)
    return _toeplitz("square", spec, grid.h, grid.n_cells)


def convolve_kernel(spec: KernelSpec, mu: GridDensity, cell_average: bool = False) -> GridField:
    """(g * mu) at cell centres (or cell averages), with exact per-cell integrals."""
    return GridField(mu.grid, convolution_matrix(spec, mu.grid, cell_average) @ mu.values)


def convolve_values(spec: KernelSpec, grid: Grid1D, values, cell_average: bool = False) -> np.ndarray:
    """As :func:`convolve_kernel` for an arbitrary (signed) array of cell values."""
    return convolution_matrix(spec, grid, cell_average) @ np.asarray(values, dtype=float)


def convolve_at(spec: KernelSpec, mu: GridDensity, x) -> np.ndarray:
    """(g * mu)(x) at arbitrary points, exact for the piecewise-constant density."""
    _check_supported(spec)
    x = np.asarray(x, dtype=float)
    e = mu.grid.edges
    A = spec.antiderivative(x[..., None] - e)
    return (A[..., :-1] - A[..., 1:]) @ mu.values


def convolve_grad_at(spec: KernelSpec, mu: GridDensity, x) -> np.ndarray:
    """d/dx (g * mu)(x) at arbitrary points (undefined exactly on a cell edge)."""
    _check_supported(spec)
    x = np.asarray(x, dtype=float)
    jumps = np.diff(np.concatenate([[0.0], mu.values, [0.0]]))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = spec.phi(np.abs(x[..., None] - mu.grid.edges))
    return phi @ jumps


def double_integral(spec: KernelSpec, mu: GridDensity, nu: GridDensity | None = None) -> float:
    """int int g(x,y) dmu(x) dnu(y) with exact cell-pair integrals."""
    nu = mu if nu is None else nu
    if mu.grid != nu.grid:
        raise ValueError("densities live on different grids")
    _check_supported(spec)
    P = _toeplitz("pair", spec, mu.grid.h, mu.grid.n_cells)
    return float(mu.values @ (P @ nu.values))


def double_integral_values(spec: KernelSpec, grid: Grid1D, a, b=None) -> float:
    b = a if b is None else b
    _check_supported(spec)
    P = _toeplitz("pair", spec, grid.h, grid.n_cells)
    return float(np.asarray(a) @ (P @ np.asarray(b)))


# ---------------------------------------------------------------------------
# pointwise operators
# ---------------------------------------------------------------------------

def grad_field(field) -> GridField:
    """Central-difference gradient (one-sided at the ends)."""
    return GridField(field.grid, np.gradient(np.asarray(field.values, float), field.grid.h))


def log_density(mu: GridDensity, floor: float = EPS_FLOOR) -> GridField:
    return GridField(mu.grid, np.log(np.maximum(mu.values, floor)))


def entropy(mu: GridDensity, floor: float = EPS_FLOOR) -> float:
    """int mu log mu, skipping cells below ``floor``."""
    v = mu.values
    keep = v > floor
    return float(mu.grid.h * np.sum(v[keep] * np.log(v[keep])))


def second_difference(values, h: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2


def c2_seminorm(field, mask=None) -> float:
    """sup over interior cells of |second difference| / h^2.

    ``mask`` restricts the sup to cells whose three-point stencil lies inside it.
    """
    grid = field.grid
    if grid.n_cells < 64:
        warnings.warn("c2_seminorm on a grid with fewer than 64 cells is unreliable", RuntimeWarning, stacklevel=2)
    d2 = np.abs(second_difference(field.values, grid.h))
    if mask is not None:
        m = np.asarray(mask, bool)
        d2 = d2[m[2:] & m[1:-1] & m[:-2]]
    return float(d2.max()) if d2.size else 0.0


def l1_distance(mu: GridDensity, nu: GridDensity) -> float:
    return float(mu.grid.h * np.abs(mu.values - nu.values).sum())


def contiguous_support(values, floor: float) -> np.ndarray:
    """Boolean mask of the longest contiguous run of cells with ``values > floor``."""
    above = np.asarray(values) > floor
    best = (0, 0)
    start = None
    for k, flag in enumerate(np.append(above, False)):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            if k - start > best[1] - best[0]:
                best = (start, k)
            start = None
    mask = np.zeros(len(above), bool)
    mask[best[0]:best[1]] = True
    return mask
