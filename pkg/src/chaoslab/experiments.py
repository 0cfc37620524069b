"""Coupled runs of the joint Liouville equation and the mean-field flow.

The joint density f^t and the mean-field density mu^t share one grid and
one time step; the modulated free energy of f^t relative to mu^t is recorded
with everything the dissipation and Gronwall audits need.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import TheoryConstants, error_terms
from .equilibrium import convexity_constant, perturb_equilibrium, solve_thermal_equilibrium
from .errors import SupportError
from .grid import Grid1D, GridDensity
from .kernels import ConfinementSpec, KernelSpec
from .liouville import JointDensity, LiouvilleSolver, build_joint, make_record, product_values, relative_entropy
from .meanfield import initial_state, mf_step


@dataclass
class CoupledRun:
    records: list
    f_final: JointDensity = field(repr=False)
    mu_final: GridDensity = field(repr=False)
    h0_product: float = float("nan")

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])


def run_coupled(f0: JointDensity, mu0: GridDensity, spec: KernelSpec, V: ConfinementSpec, beta: float,
                dt: float, t_end: float, record_every: int = 1, constants: TheoryConstants | None = None,
                mu_beta: GridDensity | None = None, with_error_terms: bool = True) -> CoupledRun:
    """Advance f and mu together and record a :class:`FreeEnergyRecord` every ``record_every`` steps.

    With ``mu_beta`` given, each record also carries the convexity certificate
    kappa of V_{mu^t, beta} and the LSI constant 2/(beta kappa).
    """
    constants = constants or TheoryConstants()
    N = f0.N
    solver = LiouvilleSolver(spec, V, beta, f0.grid, N, dt)
    state = initial_state(mu0, spec, V, beta)

    def record(t, f, st):
        extra = {"sup_grad_u": st.grad_u_sup}
        if mu_beta is not None:
            est = convexity_constant(st.mu, mu_beta, V, spec, beta)
            extra.update(kappa=est.kappa, c_ls=est.c_ls)
        o = error_terms(N, st.mu, spec, constants).o_n if with_error_terms and spec.singular else 0.0
        return make_record(t, f, st.mu, st.u, spec, beta, o_n=o, **extra)

    f = f0
    records = [record(0.0, f, state)]
    n_steps = int(round(t_end / dt))
    for k in range(1, n_steps + 1):
        f = solver.step(f)
        state = mf_step(state, spec, V, beta, dt)
        if k % record_every == 0 or k == n_steps:
            records.append(record(k * dt, f, state))
    return CoupledRun(records, f, state.mu, relative_entropy(f0, product_values(mu0, N)))


def window_for(beta: float, kappa: float, cap: float = 12.0) -> float:
    """Half-width of a window holding the equilibrium with negligible truncation."""
    return float(min(cap, 7.0 / np.sqrt(beta * kappa) + 2.0))


def split_mixture(mu: GridDensity, width: float | None = None) -> JointDensity:
    """Non-product N=2 state: mu restricted to the two half-lines, placed on opposite particles.

    The two components are mu w and mu (1 - w) with a logistic switch w of
    the given width (one cell by default); their symmetrised tensor product
    is strongly correlated.
    """
    grid = mu.grid
    x = grid.centers
    width = grid.h if width is None else width
    w = 0.5 * (1.0 + np.tanh(x / (2.0 * width)))
    a = GridDensity.from_values(grid, mu.values * w)
    b = GridDensity.from_values(grid, mu.values * (1.0 - w))
    return build_joint("custom_mixture", KernelSpec.zero(), grid, 2, components=[(a, b)])


def equilibrium_setup(spec: KernelSpec, kappa: float, beta: float, n_cells: int, bump: float = 0.1):
    """Grid, mu_beta and a smooth perturbation mu^0 = normalize(e^h mu_beta)."""
    L = window_for(beta, kappa)
    grid = Grid1D(-L, L, n_cells)
    V = ConfinementSpec.quadratic(kappa)
    eq = solve_thermal_equilibrium(spec, V, beta, grid, tol=1e-12)
    mu0 = perturb_equilibrium(eq.mu_beta, lambda x: bump * np.sin(x) * np.exp(-x**2 / 8.0))
    return grid, V, eq.mu_beta, mu0


def certify_trajectory(records, beta: float) -> tuple:
    """(kappa_min, C_LS = 2/(beta kappa_min)) over a trajectory of certified records."""
    kappas = np.array([r.kappa for r in records])
    if not np.all(np.isfinite(kappas)):
        raise SupportError("records carry no convexity certificate")
    k_min = float(kappas.min())
    return k_min, (2.0 / (beta * k_min) if k_min > 0 else float("inf"))
