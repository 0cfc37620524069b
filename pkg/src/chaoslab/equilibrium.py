"""Thermal equilibrium, mean-field free energy and the convexity certificate.

All density-level quantities use the cell-averaged convolution of
:mod:`chaoslab.grid` and confinement values at cell centres. With this
discretisation the free energy

    E(mu) = 1/2 sum_ab mu_a P_ab mu_b + h sum_a V_a mu_a + (1/beta) h sum_a mu_a log mu_a

has first variation ``K mu + V + (1/beta)(log mu + 1)``, so the fixed point
computed by :func:`solve_thermal_equilibrium` is the exact discrete minimiser.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, RescalingError, SupportError
from .grid import (
    EPS_FLOOR,
    Grid1D,
    GridDensity,
    GridField,
    c2_seminorm,
    contiguous_support,
    convolution_matrix,
    double_integral,
    entropy,
)
from .kernels import ConfinementSpec, KernelSpec, confinement_eval, confinement_hess

EXP_RANGE = 700.0


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    mu_beta: GridDensity
    c_beta: float
    residual: float
    iterations: int
    beta: float


@dataclass(frozen=True)
class LsiEstimate:
    """Convexity constant of V_{mu,beta} and the implied LSI constant.

    ``kappa = inf_v2 - (entropy_term + interaction_term)``.
    """

    kappa: float
    c_ls: float
    valid: bool
    inf_v2: float
    entropy_term: float
    interaction_term: float
    beta: float


def _potential(spec, V, beta, grid, values, K=None):
    K = convolution_matrix(spec, grid, cell_average=True) if K is None else K
    return K @ values + confinement_eval(V, grid.centers)


def _gibbs(phi, beta, grid):
    expo = -beta * (phi - phi.min())
    if -expo.min() > EXP_RANGE:
        raise RescalingError(
            f"beta * potential spans {-expo.min():.1f} > {EXP_RANGE} on the window; shrink the window or rescale"
        )
    w = np.exp(expo)
    return w / (grid.h * w.sum())


def equilibrium_residual(mu_values, phi, beta, h):
    """(sup residual, c) for the characterisation phi + (1/beta) log mu = c."""
    field = phi + np.log(np.maximum(mu_values, np.finfo(float).tiny)) / beta
    weights = h * mu_values
    c = float(np.sum(weights * field) / np.sum(weights))
    return float(np.max(np.abs(field - c))), c


def solve_thermal_equilibrium(
    spec: KernelSpec,
    V: ConfinementSpec,
    beta: float,
    grid: Grid1D,
    tol: float = 1e-10,
    theta: float = 0.5,
    max_iter: int = 10_000,
    mu0: GridDensity | None = None,
) -> EquilibriumResult:
    """Damped fixed point mu <- (1-theta) mu + theta normalize(exp(-beta (g*mu + V))).

    The damping is halved whenever the residual grows.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not 0 < theta <= 1:
        raise ValueError("damping theta must lie in (0, 1]")
    K = convolution_matrix(spec, grid, cell_average=True)
    Vc = confinement_eval(V, grid.centers)
    mu = _gibbs(Vc, beta, grid) if mu0 is None else np.array(mu0.values, dtype=float)
    prev = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        phi = K @ mu + Vc
        res, c = equilibrium_residual(mu, phi, beta, grid.h)
        if res < tol:
            return EquilibriumResult(GridDensity.from_values(grid, mu), c, res, it - 1, beta)
        if res > prev and theta > 1e-4:
            theta *= 0.5
        prev = res
        mu = (1.0 - theta) * mu + theta * _gibbs(phi, beta, grid)
    raise ConvergenceError(f"thermal equilibrium not reached after {max_iter} iterations", residual=res)


def fixed_point_update(result: EquilibriumResult, spec, V, theta: float = 0.5) -> GridDensity:
    """One more damped iteration from a converged equilibrium."""
    mu = result.mu_beta
    phi = _potential(spec, V, result.beta, mu.grid, mu.values)
    new = (1 - theta) * mu.values + theta * _gibbs(phi, result.beta, mu.grid)
    return GridDensity.from_values(mu.grid, new)


def free_energy(mu: GridDensity, spec: KernelSpec, V: ConfinementSpec, beta: float) -> float:
    """1/2 iint g dmu dmu + int V dmu + (1/beta) int mu log mu (beta = inf drops the entropy)."""
    interaction = 0.5 * double_integral(spec, mu)
    potential = float(np.sum(mu.cell_masses * confinement_eval(V, mu.grid.centers)))
    ent = 0.0 if np.isinf(beta) else entropy(mu) / beta
    return interaction + potential + ent


def _check_interior_zeros(mu: GridDensity, floor: float = 0.0):
    pos = np.nonzero(mu.values > floor)[0]
    if pos.size == 0:
        raise SupportError("density has empty support")
    if np.any(mu.values[pos[0]:pos[-1] + 1] <= floor):
        raise SupportError("density has interior zeros")


def effective_confinement(mu: GridDensity, spec: KernelSpec, beta: float) -> GridField:
    """V_{mu,beta} = -g*mu - (1/beta) log mu (cells outside the support use the log floor)."""
    _check_interior_zeros(mu)
    conv = convolution_matrix(spec, mu.grid, cell_average=True) @ mu.values
    return GridField(mu.grid, -conv - np.log(np.maximum(mu.values, EPS_FLOOR)) / beta)


def perturb_equilibrium(mu_beta: GridDensity, h) -> GridDensity:
    """normalize(e^h mu_beta) for a callable or array ``h``."""
    hv = h(mu_beta.grid.centers) if callable(h) else np.asarray(h, dtype=float)
    return GridDensity.from_values(mu_beta.grid, np.exp(hv) * mu_beta.values)


def convexity_constant(
    mu: GridDensity,
    mu_beta: GridDensity,
    V: ConfinementSpec,
    spec: KernelSpec,
    beta: float,
    support_floor: float = 1e-10,
) -> LsiEstimate:
    """kappa = inf V'' - [(1/beta) |log(mu/mu_beta)|_C2 + |g*(mu - mu_beta)|_C2].

    Both seminorms are taken over the contiguous window where mu and mu_beta
    exceed ``support_floor``; inf V'' over the whole grid window.
    """
    if mu.grid != mu_beta.grid:
        raise SupportError("mu and mu_beta live on different grids")
    grid = mu.grid
    mask = contiguous_support(np.minimum(mu.values, mu_beta.values), support_floor)
    if mask.sum() < 3:
        raise SupportError("mu and mu_beta have no common support window")
    with np.errstate(divide="ignore"):
        ratio = np.where(mask, np.log(np.where(mask, mu.values, 1.0)) - np.log(np.where(mask, mu_beta.values, 1.0)), 0.0)
    ent = c2_seminorm(GridField(grid, ratio), mask) / beta
    conv = convolution_matrix(spec, grid, cell_average=True) @ (mu.values - mu_beta.values)
    inter = c2_seminorm(GridField(grid, conv), mask)
    inf_v2 = float(np.min(confinement_hess(V, grid.centers)))
    kappa = inf_v2 - (ent + inter)
    valid = kappa > 0
    c_ls = 2.0 / (beta * kappa) if valid else float("inf")
    return LsiEstimate(kappa, c_ls, valid, inf_v2, ent, inter, beta)
