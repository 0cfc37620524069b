"""Scharfetter-Gummel (exponentially fitted Chang-Cooper) finite volumes.

Shared by the mean-field solver and the joint Liouville solver. Along a line
of cells with potential ``Phi`` the zero-flux operator is

    (L f)_i = -(J_{i+1/2} - J_{i-1/2}) / h,
    J_{i+1/2} = (D / h) [B(w) f_i - B(-w) f_{i+1}],   w = (Phi_{i+1} - Phi_i) / D,

with B(z) = z / (e^z - 1). Columns of L sum to zero (mass is conserved),
off-diagonals are nonnegative (implicit steps preserve positivity) and
``exp(-Phi / D)`` is annihilated exactly, so Gibbs states are discrete
steady states.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import CFLError


def bernoulli(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = z / np.expm1(z)
    return np.where(small, 1.0 - 0.5 * z, out)


def sg_coefficients(phi, D: float, h: float):
    """Tridiagonal coefficients of L along the last axis of ``phi``.

    Returns ``(lower, diag, upper)`` with the shape of ``phi``; ``lower[..., i]``
    multiplies f_{i-1} and ``upper[..., i]`` multiplies f_{i+1}.
    """
    phi = np.asarray(phi, dtype=float)
    w = np.diff(phi, axis=-1) / D
    c = D / h**2
    bp = c * bernoulli(w)      # B(w_{i+1/2})
    bm = c * bernoulli(-w)     # B(-w_{i+1/2})
    lower = np.zeros_like(phi)
    upper = np.zeros_like(phi)
    diag = np.zeros_like(phi)
    upper[..., :-1] = bm
    lower[..., 1:] = bp
    diag[..., :-1] -= bp
    diag[..., 1:] -= bm
    return lower, diag, upper


def apply_operator(coeffs, f):
    lower, diag, upper = coeffs
    out = diag * f
    out[..., 1:] += lower[..., 1:] * f[..., :-1]
    out[..., :-1] += upper[..., :-1] * f[..., 1:]
    return out


def implicit_banded(coeffs, dt: float) -> np.ndarray:
    """Banded storage of (I - dt L), all lines concatenated into one system."""
    lower, diag, upper = (np.ascontiguousarray(c).reshape(-1) for c in coeffs)
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = -dt * upper[:-1]
    ab[1] = 1.0 - dt * diag
    ab[2, :-1] = -dt * lower[1:]
    return ab


def implicit_step(coeffs, f, dt: float, ab=None):
    """Backward-Euler step along the last axis; ``ab`` may be precomputed."""
    if ab is None:
        ab = implicit_banded(coeffs, dt)
    shape = f.shape
    out = solve_banded((1, 1), ab, np.ascontiguousarray(f).reshape(-1), check_finite=False)
    return out.reshape(shape)


def explicit_dt_limit(coeffs) -> float:
    return 1.0 / float(np.max(-coeffs[1]))


def explicit_step(coeffs, f, dt: float):
    limit = explicit_dt_limit(coeffs)
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"explicit step dt={dt:g} exceeds the positivity limit {limit:g}")
    return f + dt * apply_operator(coeffs, f)


def check_positive(f, what="density"):
    """Clip roundoff-level negatives; anything larger is a bug."""
    fmin = float(f.min())
    if fmin < 0.0:
        scale = float(np.abs(f).max())
        assert fmin >= -1e-13 * scale, f"negative {what} {fmin:g}: scheme lost positivity"
        f = np.maximum(f, 0.0)
    return f
