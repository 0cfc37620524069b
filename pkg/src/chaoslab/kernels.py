"""Interaction kernels and confinement potentials.

Every kernel formula in the package lives here. Kernels are translation
invariant and radial, g(x, y) = phi(|x - y|), so each family is described by
its radial profile ``phi`` together with the closed-form antiderivatives that
the grid code needs for exact cell integrals:

* ``antiderivative(u)``  -- odd function A with A' = phi(|u|)
* ``antiderivative2(u)`` -- even function B with B' = A

Families
--------
log     phi(r) = -log r
riesz   phi(r) = r**(-s) / s,  0 < s < d
smooth  built-in bounded C^2 tables: ``gaussian`` (a exp(-r^2/l^2)),
        ``cosine`` (a cos(r/l)) and ``constant`` (a)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import erf

from .errors import DomainError, UnsupportedKernelError

__all__ = [
    "KernelSpec",
    "ConfinementSpec",
    "kernel_eval",
    "kernel_grad",
    "kernel_second_derivative",
    "confinement_eval",
    "confinement_grad",
    "confinement_hess",
    "growth_bound_holds",
]

SMOOTH_TABLES = ("gaussian", "cosine", "constant")


@dataclass(frozen=True)
class KernelSpec:
    """An interaction kernel family in dimension ``d``.

    ``s`` is only meaningful for ``riesz``; ``table``, ``amplitude`` and
    ``scale`` only for ``smooth``.
    """

    family: str
    s: float = 0.0
    d: int = 1
    table: str | None = None
    amplitude: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.family == "log":
            object.__setattr__(self, "s", 0.0)
        elif self.family == "riesz":
            if not 0.0 < self.s < self.d:
                raise ValueError(f"riesz kernel requires 0 < s < d, got s={self.s}, d={self.d}")
        elif self.family == "smooth":
            if self.table not in SMOOTH_TABLES:
                raise ValueError(f"unknown smooth table {self.table!r}; expected one of {SMOOTH_TABLES}")
            if self.scale <= 0:
                raise ValueError("smooth kernel scale must be positive")
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    @classmethod
    def log(cls, d: int = 1) -> "KernelSpec":
        return cls("log", 0.0, d)

    @classmethod
    def riesz(cls, s: float, d: int = 1) -> "KernelSpec":
        return cls("riesz", s, d)

    @classmethod
    def smooth(cls, table: str, amplitude: float = 1.0, scale: float = 1.0, d: int = 1) -> "KernelSpec":
        return cls("smooth", 0.0, d, table, amplitude, scale)

    @classmethod
    def zero(cls, d: int = 1) -> "KernelSpec":
        """The g == 0 kernel (a constant table with amplitude 0)."""
        return cls("smooth", 0.0, d, "constant", 0.0)

    @property
    def singular(self) -> bool:
        return self.family in ("log", "riesz")

    @property
    def is_zero(self) -> bool:
        return self.family == "smooth" and self.table == "constant" and self.amplitude == 0.0

    # -- radial profile -------------------------------------------------
    def phi(self, r):
        """Radial profile phi(r) for r >= 0; +inf at r = 0 for singular families."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self.family == "log":
                return -np.log(r)
            if self.family == "riesz":
                return r ** (-self.s) / self.s
        a, ell = self.amplitude, self.scale
        if self.table == "gaussian":
            return a * np.exp(-((r / ell) ** 2))
        if self.table == "cosine":
            return a * np.cos(r / ell)
        return np.full_like(r, a)

    def dphi(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self.family == "log":
                return -1.0 / r
            if self.family == "riesz":
                return -(r ** (-self.s - 1.0))
        a, ell = self.amplitude, self.scale
        if self.table == "gaussian":
            return -2.0 * a * r / ell**2 * np.exp(-((r / ell) ** 2))
        if self.table == "cosine":
            return -a / ell * np.sin(r / ell)
        return np.zeros_like(r)

    def d2phi(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            if self.family == "log":
                return 1.0 / r**2
            if self.family == "riesz":
                return self.s * (self.s + 1.0) * r ** (-self.s - 2.0)
        a, ell = self.amplitude, self.scale
        if self.table == "gaussian":
            z = (r / ell) ** 2
            return a * (4.0 * z - 2.0) / ell**2 * np.exp(-z)
        if self.table == "cosine":
            return -a / ell**2 * np.cos(r / ell)
        return np.zeros_like(r)

    def virial(self, r):
        """r * phi'(r): the bounded factor in (v(x)-v(y)) . grad_1 g(x,y) for log/riesz."""
        r = np.asarray(r, dtype=float)
        if self.family == "log":
            return -np.ones_like(r)
        if self.family == "riesz":
            with np.errstate(divide="ignore"):
                return -(r ** (-self.s))
        return r * self.dphi(r)

    # -- antiderivatives (1D) -------------------------------------------
    def antiderivative(self, u):
        """Odd antiderivative A(u) = int_0^u phi(|t|) dt."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        if self.family == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                val = u - u * np.log(au)
            return np.where(au == 0.0, 0.0, val)
        if self.family == "riesz":
            s = self.s
            if s >= 1.0:
                raise UnsupportedKernelError("riesz kernel with s >= 1 is not locally integrable in d=1")
            return np.sign(u) * au ** (1.0 - s) / (s * (1.0 - s))
        a, ell = self.amplitude, self.scale
        if self.table == "gaussian":
            return a * ell * np.sqrt(np.pi) / 2.0 * erf(u / ell)
        if self.table == "cosine":
            return a * ell * np.sin(u / ell)
        return a * u

    def antiderivative2(self, u):
        """Even second antiderivative B(u) with B(0) = 0 and B' = A."""
        u = np.asarray(u, dtype=float)
        au = np.abs(u)
        if self.family == "log":
            with np.errstate(divide="ignore", invalid="ignore"):
                val = 0.75 * u**2 - 0.5 * u**2 * np.log(au)
            return np.where(au == 0.0, 0.0, val)
        if self.family == "riesz":
            s = self.s
            if s >= 1.0:
                raise UnsupportedKernelError("riesz kernel with s >= 1 is not locally integrable in d=1")
            return au ** (2.0 - s) / (s * (1.0 - s) * (2.0 - s))
        a, ell = self.amplitude, self.scale
        if self.table == "gaussian":
            return a * ell * np.sqrt(np.pi) / 2.0 * u * erf(u / ell) + a * ell**2 / 2.0 * (np.exp(-((u / ell) ** 2)) - 1.0)
        if self.table == "cosine":
            return a * ell**2 * (1.0 - np.cos(u / ell))
        return 0.5 * a * u**2

    def virial_antiderivative(self, u):
        """Odd antiderivative of r phi'(r): u phi(|u|) - A(u)."""
        u = np.asarray(u, dtype=float)
        if self.family == "log":
            return -u
        with np.errstate(divide="ignore", invalid="ignore"):
            val = u * self.phi(np.abs(u)) - self.antiderivative(u)
        return np.where(u == 0.0, 0.0, val)

    def virial_antiderivative2(self, u):
        """Even second antiderivative of r phi'(r): u A(u) - 2 B(u)."""
        u = np.asarray(u, dtype=float)
        return u * self.antiderivative(u) - 2.0 * self.antiderivative2(u)

    def to_dict(self) -> dict:
        out = {"family": self.family, "d": self.d}
        if self.family == "riesz":
            out["s"] = self.s
        if self.family == "smooth":
            out.update(table=self.table, amplitude=self.amplitude, scale=self.scale)
        return out


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None]
    return x


def _separation(spec, x, y):
    diff = _as_points(x, spec.d) - _as_points(y, spec.d)
    if spec.d == 1:
        return diff, np.abs(diff[..., 0])
    scale = np.max(np.abs(diff), axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return diff, scale[..., 0] * np.sqrt(np.sum((diff / safe) ** 2, axis=-1))


def kernel_eval(spec: KernelSpec, x, y):
    """g(x, y); returns +inf on the diagonal for singular families."""
    _, r = _separation(spec, x, y)
    val = spec.phi(r)
    if spec.singular:
        val = np.where(r == 0.0, np.inf, val)
    return val[()] if np.ndim(val) == 0 else val


def kernel_grad(spec: KernelSpec, x, y):
    """Gradient of g in its first argument.

    For ``d == 1`` the result has the shape of the broadcast inputs; otherwise
    the trailing axis has length ``d``.
    """
    diff, r = _separation(spec, x, y)
    if spec.singular and np.any(r == 0.0):
        raise DomainError("kernel gradient undefined at coincident points for a singular kernel")
    if spec.d == 1:
        # radial derivative times the sign of x - y; avoids squaring tiny separations
        out = spec.dphi(r) * np.sign(diff[..., 0])
        if not spec.singular:
            out = np.where(r > 0, out, 0.0)
        return out[()] if np.ndim(out) == 0 else out
    if spec.family == "log":
        coef = -1.0 / r**2
    elif spec.family == "riesz":
        coef = -(r ** (-spec.s - 2.0))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(r > 0, spec.dphi(r) / np.where(r > 0, r, 1.0), 0.0)
    return coef[..., None] * diff


def kernel_second_derivative(spec: KernelSpec, r):
    """Radial g''(r) in one dimension, r > 0."""
    if spec.d != 1:
        raise DomainError("second-derivative machinery is one-dimensional only")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("kernel_second_derivative requires r > 0")
    out = spec.d2phi(r)
    return out[()] if np.ndim(out) == 0 else out


def growth_bound_holds(spec: KernelSpec, r, C: float = 2.0) -> bool:
    """Check |g| <= C (1 + |log r|) (log) or C (1 + r^-s) (riesz) on samples ``r``."""
    r = np.asarray(r, dtype=float)
    g = np.abs(spec.phi(r))
    if spec.family == "log":
        bound = C * (1.0 + np.abs(np.log(r)))
    elif spec.family == "riesz":
        bound = C * (1.0 + r ** (-spec.s))
    else:
        bound = np.full_like(r, C * (1.0 + abs(spec.amplitude)))
    return bool(np.all(g <= bound))


@dataclass(frozen=True)
class ConfinementSpec:
    """Confinement potential V.

    quadratic  V = kappa |x|^2 / 2
    quartic    V = a |x|^4 + b |x|^2 / 2
    zero       V = 0
    table      cubic spline through ``nodes``/``values`` (d = 1 only)
    """

    form: str
    kappa: float = 1.0
    a: float = 0.0
    b: float = 0.0
    nodes: tuple = ()
    values: tuple = ()
    d: int = 1
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.form == "quadratic":
            if self.kappa <= 0:
                raise ValueError("quadratic confinement requires kappa > 0")
        elif self.form == "table":
            if self.d != 1:
                raise ValueError("tabulated confinement is one-dimensional only")
            if len(self.nodes) < 4 or len(self.nodes) != len(self.values):
                raise ValueError("table confinement needs >= 4 matching nodes/values")
            object.__setattr__(self, "_spline", CubicSpline(np.asarray(self.nodes, float), np.asarray(self.values, float)))
        elif self.form not in ("quartic", "zero"):
            raise ValueError(f"unknown confinement form {self.form!r}")

    @classmethod
    def quadratic(cls, kappa: float, d: int = 1) -> "ConfinementSpec":
        return cls("quadratic", kappa=kappa, d=d)

    @classmethod
    def zero(cls, d: int = 1) -> "ConfinementSpec":
        return cls("zero", d=d)

    def to_dict(self) -> dict:
        out = {"form": self.form, "d": self.d}
        if self.form == "quadratic":
            out["kappa"] = self.kappa
        elif self.form == "quartic":
            out.update(a=self.a, b=self.b)
        elif self.form == "table":
            out.update(nodes=list(self.nodes), values=list(self.values))
        return out


def _radius2(spec, x):
    x = np.asarray(x, dtype=float)
    if spec.d == 1:
        return x, x**2
    return x, np.sum(x**2, axis=-1)


def confinement_eval(spec: ConfinementSpec, x):
    x, r2 = _radius2(spec, x)
    if spec.form == "quadratic":
        return 0.5 * spec.kappa * r2
    if spec.form == "quartic":
        return spec.a * r2**2 + 0.5 * spec.b * r2
    if spec.form == "zero":
        return np.zeros_like(r2)
    return spec._spline(x)


def confinement_grad(spec: ConfinementSpec, x):
    x, r2 = _radius2(spec, x)
    if spec.form == "quadratic":
        return spec.kappa * x
    if spec.form == "quartic":
        coef = 4.0 * spec.a * r2 + spec.b
        return coef * x if spec.d == 1 else coef[..., None] * x
    if spec.form == "zero":
        return np.zeros_like(x)
    return spec._spline(x, 1)


def confinement_hess(spec: ConfinementSpec, x):
    """V'' in d = 1; the smallest Hessian eigenvalue for d > 1."""
    x, r2 = _radius2(spec, x)
    if spec.form == "quadratic":
        return np.full_like(r2, spec.kappa)
    if spec.form == "quartic":
        if spec.d == 1:
            return 12.0 * spec.a * r2 + spec.b
        return np.minimum(12.0 * spec.a * r2, 4.0 * spec.a * r2) + spec.b
    if spec.form == "zero":
        return np.zeros_like(r2)
    return spec._spline(x, 2)
