"""Joint Fokker-Planck (Liouville) solver on (grid)^N for N in {2, 3}, d = 1.

This is the brute-force oracle: densities on the tensor grid give direct
access to relative entropies, the modulated free energy, the modulated
Fisher information and the partition function, so every inequality of the
modulated free energy argument can be audited without sampling error.

Conventions on the tensor grid
------------------------------
* pair interactions use the cell x cell average of g (finite on diagonal
  cells), ``G = pair_average_matrix``;
* ``g*mu`` is the cell-averaged convolution, the same operator the
  mean-field solver uses;
* the Hamiltonian per unit noise is ``Phi(X) = (1/2N) sum_{i!=j} G + sum V``.

With these choices ``E_{mu^N}[F_N] = -(1/2N) iint g dmu dmu`` and
``beta E_N = H_N(f|Q) - log K / N`` hold exactly at grid level.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.special import logsumexp

from . import fokker_planck as fp
from .errors import CFLError, DomainError, InvalidLSIError, MemoryBudgetError, SupportError
from .grid import (
    Grid1D,
    GridDensity,
    GridField,
    convolution_matrix,
    double_integral,
    pair_average_matrix,
    virial_pair_average,
)
from .kernels import ConfinementSpec, KernelSpec, confinement_eval

MEMORY_BUDGET = 2**27
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class JointDensity:
    grid: Grid1D
    N: int
    values: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        if self.N not in (2, 3):
            raise ValueError("joint densities support N in {2, 3}")
        n = self.grid.n_cells
        vals = np.array(self.values, dtype=float)
        if vals.shape != (n,) * self.N:
            raise ValueError(f"values must have shape {(n,) * self.N}, got {vals.shape}")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("joint density must be finite and nonnegative")
        mass = vals.sum() * self.grid.h**self.N
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"joint density has mass {mass!r}, expected 1")
        if self.symmetric and symmetry_defect(vals) > SYMMETRY_TOL * vals.max():
            raise ValueError("values flagged symmetric are not permutation invariant")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, grid, values, symmetric=True) -> "JointDensity":
        vals = np.asarray(values, dtype=float)
        N = vals.ndim
        return cls(grid, N, vals / (vals.sum() * grid.h**N), symmetric)

    @property
    def cell_volume(self) -> float:
        return self.grid.h**self.N

    def marginal(self, k: int = 1) -> np.ndarray:
        """Symmetrised k-marginal (k = 1 gives a vector, k = 2 a matrix)."""
        axes = tuple(range(k, self.N))
        m = self.values.sum(axis=axes) * self.grid.h ** (self.N - k)
        if not self.symmetric:
            m = np.mean([self.values.transpose(p).sum(axis=axes) for p in itertools.permutations(range(self.N))], axis=0)
            m = m * self.grid.h ** (self.N - k)
        return m

    def marginal_density(self) -> GridDensity:
        return GridDensity.from_values(self.grid, self.marginal(1))


def symmetry_defect(values) -> float:
    N = values.ndim
    return max(float(np.max(np.abs(values - values.transpose(p)))) for p in itertools.permutations(range(N)))


def _check_budget(grid: Grid1D, N: int) -> None:
    if grid.n_cells**N > MEMORY_BUDGET:
        raise MemoryBudgetError(f"n_cells^N = {grid.n_cells}^{N} exceeds the budget of {MEMORY_BUDGET} entries")


def _axis_view(vec, axis, N):
    shape = [1] * N
    shape[axis] = -1
    return np.reshape(vec, shape)


def _pair_sum(M, N):
    """sum_{i<j} M[a_i, a_j] on the tensor grid (M symmetric)."""
    n = M.shape[0]
    out = np.zeros((n,) * N)
    for i, j in itertools.combinations(range(N), 2):
        shape = [1] * N
        shape[i] = n
        shape[j] = n
        out = out + M.reshape(shape)
    return out


def _one_body_sum(vec, N):
    return reduce(np.add, (_axis_view(vec, i, N) for i in range(N)))


def modulated_energy_grid(mu: GridDensity, spec: KernelSpec, N: int) -> np.ndarray:
    """F_N(X_N, mu) on every cell of the tensor grid."""
    grid = mu.grid
    _check_budget(grid, N)
    G = pair_average_matrix(spec, grid)
    conv = convolution_matrix(spec, grid, cell_average=True) @ mu.values
    background = 0.5 * double_integral(spec, mu)
    return _pair_sum(G, N) / N**2 - _one_body_sum(conv, N) / N + background


def joint_potential(spec: KernelSpec, V: ConfinementSpec, grid: Grid1D, N: int) -> np.ndarray:
    """Phi = (1/N) sum_{i<j} g + sum_i V(x_i); Gibbs states are exp(-beta Phi)."""
    _check_budget(grid, N)
    G = pair_average_matrix(spec, grid)
    return _pair_sum(G, N) / N + _one_body_sum(confinement_eval(V, grid.centers), N)


def _log_product(mu: GridDensity, N: int):
    with np.errstate(divide="ignore"):
        logmu = np.log(mu.values)
    return _one_body_sum(logmu, N)


def _normalized_exp(logw, grid, N):
    logw = logw - np.max(logw)
    w = np.exp(logw)
    return w / (w.sum() * grid.h**N)


def _symmetrize(values):
    N = values.ndim
    return np.mean([values.transpose(p) for p in itertools.permutations(range(N))], axis=0)


def build_joint(
    kind: str,
    spec: KernelSpec,
    grid: Grid1D,
    N: int,
    mu: GridDensity | None = None,
    beta: float | None = None,
    V: ConfinementSpec | None = None,
    components=None,
    weights=None,
) -> JointDensity:
    """Tensor-grid densities.

    kind:
      ``product``          mu^{(x)N}
      ``modulated_gibbs``  exp(-beta N F_N(., mu)) mu^{(x)N} / K
      ``gibbs``            exp(-beta Phi) / Z
      ``custom_mixture``   symmetrised sum_c w_c nu_{c,1} (x) ... (x) nu_{c,N};
                           ``components`` is a list of N-tuples of GridDensity
    """
    _check_budget(grid, N)
    if kind == "product":
        vals = reduce(np.multiply, (_axis_view(mu.values, i, N) for i in range(N)))
    elif kind == "modulated_gibbs":
        logw = -beta * N * modulated_energy_grid(mu, spec, N) + _log_product(mu, N)
        vals = _normalized_exp(logw, grid, N)
    elif kind == "gibbs":
        vals = _normalized_exp(-beta * joint_potential(spec, V, grid, N), grid, N)
    elif kind == "custom_mixture":
        if not components:
            raise ValueError("custom_mixture needs components")
        w = np.ones(len(components)) if weights is None else np.asarray(weights, dtype=float)
        vals = np.zeros((grid.n_cells,) * N)
        for wc, comp in zip(w / w.sum(), components):
            if len(comp) != N:
                raise ValueError("each mixture component needs one density per particle")
            vals = vals + wc * reduce(np.multiply, (_axis_view(c.values, i, N) for i, c in enumerate(comp)))
        vals = _symmetrize(vals)
    else:
        raise ValueError(f"unknown joint density kind {kind!r}")
    return JointDensity.from_values(grid, vals, symmetric=True)


def log_partition_exact(mu: GridDensity, spec: KernelSpec, beta: float, N: int) -> float:
    """log K_{N,beta}(mu) by direct summation over the tensor grid."""
    logw = -beta * N * modulated_energy_grid(mu, spec, N) + _log_product(mu, N)
    return float(logsumexp(logw) + N * np.log(mu.grid.h))


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

class LiouvilleSolver:
    """Backward-Euler dimension splitting with the Scharfetter-Gummel operator.

    The joint potential is time independent, so the banded factors of every
    axis are built once. One step averages the split products over all axis
    orderings, which keeps exchangeable data exchangeable; every sweep
    annihilates exp(-beta Phi), so Gibbs states are exactly stationary.
    """

    def __init__(self, spec: KernelSpec, V: ConfinementSpec, beta: float, grid: Grid1D, N: int, dt: float, mode: str = "implicit"):
        if mode not in ("implicit", "explicit"):
            raise ValueError(f"unknown time-stepping mode {mode!r}")
        self.grid, self.N, self.dt, self.mode, self.beta = grid, N, dt, mode, beta
        phi = joint_potential(spec, V, grid, N)
        self._coeffs = [fp.sg_coefficients(np.moveaxis(phi, k, -1), 1.0 / beta, grid.h) for k in range(N)]
        if mode == "explicit":
            limit = 1.0 / float(np.max(sum(np.moveaxis(-c[1], -1, k) for k, c in enumerate(self._coeffs))))
            if dt > limit * (1 + 1e-12):
                raise CFLError(f"explicit joint step dt={dt:g} exceeds the positivity limit {limit:g}")
            self._banded = None
        else:
            self._banded = [fp.implicit_banded(c, dt) for c in self._coeffs]
        self._orders = list(itertools.permutations(range(N)))

    def _sweep(self, f, k):
        moved = np.ascontiguousarray(np.moveaxis(f, k, -1))
        out = fp.implicit_step(self._coeffs[k], moved, self.dt, ab=self._banded[k])
        return np.moveaxis(out, -1, k)

    def step_values(self, f):
        if self.mode == "explicit":
            df = sum(np.moveaxis(fp.apply_operator(c, np.moveaxis(f, k, -1)), -1, k) for k, c in enumerate(self._coeffs))
            return fp.check_positive(f + self.dt * df, "joint density")
        acc = np.zeros_like(f)
        for order in self._orders:
            g = f
            for k in order:
                g = self._sweep(g, k)
            acc += g
        return fp.check_positive(acc / len(self._orders), "joint density")

    def step(self, f: JointDensity) -> JointDensity:
        new = self.step_values(np.array(f.values))
        new = new / (new.sum() * self.grid.h**self.N)
        if f.symmetric:
            new = 0.5 * (new + new.T) if self.N == 2 else _symmetrize(new)
        return JointDensity(self.grid, self.N, new, f.symmetric)


def liouville_step(f: JointDensity, spec, V, beta, dt, mode: str = "implicit", solver: LiouvilleSolver | None = None) -> JointDensity:
    if solver is None:
        solver = LiouvilleSolver(spec, V, beta, f.grid, f.N, dt, mode)
    return solver.step(f)


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def _joint_values(x):
    return x.values if isinstance(x, JointDensity) else np.asarray(x, dtype=float)


def relative_entropy(f, g, floor: float = 1e-300) -> float:
    """(1/N) int f log(f/g) on the tensor grid.

    Summed in the form f log(f/g) - f + g, which is nonnegative cell by cell
    and equal to the plain integrand once both densities carry unit mass;
    this keeps tiny entropies (near equilibrium) free of cancellation.
    """
    fv, gv = _joint_values(f), _joint_values(g)
    grid = f.grid if isinstance(f, JointDensity) else g.grid
    N = fv.ndim
    pos = fv > floor
    if np.any(gv[pos] <= 0.0):
        raise SupportError("relative entropy: f is not absolutely continuous with respect to the reference")
    fp_, gp_ = fv[pos], gv[pos]
    d = fp_ - gp_
    ratio = d / gp_
    near = np.abs(ratio) < 0.5
    logr = np.where(near, np.log1p(np.where(near, ratio, 0.0)), np.log(fp_) - np.log(gp_))
    val = np.sum(fp_ * logr - d) + np.sum(gv[~pos])
    return float(val * grid.h**N / N)


def product_values(mu: GridDensity, N: int) -> np.ndarray:
    return reduce(np.multiply, (_axis_view(mu.values, i, N) for i in range(N)))


def mean_modulated_energy(f: JointDensity, mu: GridDensity, spec: KernelSpec) -> float:
    """int F_N df through the one- and two-particle marginals."""
    N, grid = f.N, f.grid
    G = pair_average_matrix(spec, grid)
    conv = convolution_matrix(spec, grid, cell_average=True) @ mu.values
    m1, m2 = f.marginal(1), f.marginal(2)
    pair = (N - 1) / (2.0 * N) * float(np.sum(m2 * G)) * grid.h**2
    cross = float(np.sum(m1 * conv)) * grid.h
    return pair - cross + 0.5 * double_integral(spec, mu)


@dataclass
class ModulatedFreeEnergy:
    h_rel: float
    mean_F: float
    e_n: float


def modulated_free_energy(f: JointDensity, mu: GridDensity, spec: KernelSpec, beta: float) -> ModulatedFreeEnergy:
    h_rel = relative_entropy(f, product_values(mu, f.N))
    mean_F = mean_modulated_energy(f, mu, spec)
    return ModulatedFreeEnergy(h_rel, mean_F, h_rel / beta + mean_F)


def modulated_fisher(f: JointDensity, mu: GridDensity, spec: KernelSpec, beta: float, Q: JointDensity | None = None) -> float:
    """(1/N) int |grad sqrt(f/Q)|^2 dQ with centred differences of sqrt(f/Q)."""
    if Q is None:
        Q = build_joint("modulated_gibbs", spec, f.grid, f.N, mu=mu, beta=beta)
    fv, qv = f.values, Q.values
    if np.any((fv > 0) & (qv <= 0)):
        raise SupportError("modulated Fisher information: f and Q have different supports")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(qv > 0, np.sqrt(fv / qv), 0.0)
    total = 0.0
    for k in range(f.N):
        dr = np.gradient(r, f.grid.h, axis=k)
        total += float(np.sum(qv * dr**2))
    return total * f.cell_volume / f.N


def commutator_kernel(v: GridField, spec: KernelSpec) -> np.ndarray:
    """k_ab = (v_a - v_b)/(x_a - x_b) * avg(r phi'(r)), with v'(x_a) on the diagonal."""
    grid = v.grid
    x = grid.centers
    dx = x[:, None] - x[None, :]
    dv = v.values[:, None] - v.values[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        D = np.where(dx != 0, dv / dx, 0.0)
    np.fill_diagonal(D, np.gradient(v.values, grid.h))
    return D * virial_pair_average(spec, grid)


def mean_commutator(f: JointDensity, mu: GridDensity, v: GridField, spec: KernelSpec) -> float:
    """int of the commutator functional (v(x)-v(y)).grad_1 g against (emp - mu)^2 off the diagonal, averaged over f."""
    N, h = f.N, f.grid.h
    k = commutator_kernel(v, spec)
    c = k @ mu.values * h
    back = float(mu.values @ c) * h
    pair = (N - 1) / N * float(np.sum(f.marginal(2) * k)) * h**2
    cross = 2.0 * float(np.sum(f.marginal(1) * c)) * h
    return pair - cross + back


def commutator_grid(v: GridField, mu: GridDensity, spec: KernelSpec, N: int) -> np.ndarray:
    """The commutator functional at every configuration cell of the tensor grid."""
    h = mu.grid.h
    k = commutator_kernel(v, spec)
    c = k @ mu.values * h
    back = float(mu.values @ c) * h
    return 2.0 * _pair_sum(k, N) / N**2 - 2.0 * _one_body_sum(c, N) / N + back


# ---------------------------------------------------------------------------
# trajectories and audits
# ---------------------------------------------------------------------------

RECORD_COLUMNS = ("t", "h_rel", "mean_F", "e_n", "e_script", "fisher", "commutator", "bound_rhs",
                  "h_rel_q", "log_k", "o_n", "c_ls", "kappa", "sup_grad_u")


@dataclass
class FreeEnergyRecord:
    t: float
    h_rel: float
    mean_F: float
    e_n: float
    e_script: float
    fisher: float
    commutator: float
    bound_rhs: float = float("nan")
    h_rel_q: float = float("nan")
    log_k: float = float("nan")
    o_n: float = 0.0
    c_ls: float = float("nan")
    kappa: float = float("nan")
    sup_grad_u: float = float("nan")

    def as_row(self) -> dict:
        return {c: getattr(self, c) for c in RECORD_COLUMNS}


def make_record(t, f: JointDensity, mu: GridDensity, u: GridField, spec, beta, o_n: float = 0.0, **extra) -> FreeEnergyRecord:
    mfe = modulated_free_energy(f, mu, spec, beta)
    Q = build_joint("modulated_gibbs", spec, f.grid, f.N, mu=mu, beta=beta)
    fisher = modulated_fisher(f, mu, spec, beta, Q=Q)
    comm = mean_commutator(f, mu, u, spec)
    log_k = log_partition_exact(mu, spec, beta, f.N)
    h_q = relative_entropy(f, Q)
    return FreeEnergyRecord(t, mfe.h_rel, mfe.mean_F, mfe.e_n, mfe.e_n + o_n, fisher, comm,
                            h_rel_q=h_q, log_k=log_k, o_n=o_n, **extra)


def time_derivative(t, y):
    """Centred differences inside, one-sided at the ends."""
    return np.gradient(np.asarray(y, dtype=float), np.asarray(t, dtype=float))


@dataclass
class DissipationReport:
    worst_margin: float
    violations: int
    tol_disc: float
    identity_residual: float
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    exact_rhs: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def dissipation_audit(records, beta: float, tol_disc: float = 0.0) -> DissipationReport:
    """Check dE/dt <= -(1/beta^2) I + |<comm>|/2 + tol_disc at every record.

    Also reports the largest deviation from the exact rate
    -(4/beta^2) I - <comm>/2 (``identity_residual``).
    """
    t = np.array([r.t for r in records])
    e = np.array([r.e_n for r in records])
    fisher = np.array([r.fisher for r in records])
    comm = np.array([r.commutator for r in records])
    lhs = time_derivative(t, e)
    rhs = -fisher / beta**2 + 0.5 * np.abs(comm)
    exact = -4.0 * fisher / beta**2 - 0.5 * comm
    margin = rhs + tol_disc - lhs
    return DissipationReport(float(margin.min()), int(np.sum(margin < 0)), tol_disc,
                             float(np.max(np.abs(lhs - exact))), lhs, rhs, exact)


@dataclass
class GronwallReport:
    worst_margin: float
    violations: int
    decay_rate: float
    predicted_rate: float
    plain_rate: float
    lsi_violations: int
    bound_rhs: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.lsi_violations == 0


def gronwall_rhs(t, e0, c_ls, beta, c_me, u_norm, o_n, log_k, N):
    """Right-hand side of the Gronwall bound at every time of ``t`` (trapezoid rule).

    E(t) <= exp(-a t + U(t)) E(0)
            + exp(-a t + U(t)) int_0^t exp(a s - U(s)) [o'(s) + a (o(s) - log K(s)/(beta N))] ds
    with a = 4/(beta C_LS) and U(t) = int_0^t c_me |u|_* / 2.
    """
    t = np.asarray(t, dtype=float)
    a = 4.0 / (beta * c_ls)
    half = 0.5 * c_me * np.asarray(u_norm, dtype=float)
    U = np.concatenate([[0.0], np.cumsum(0.5 * (half[1:] + half[:-1]) * np.diff(t))])
    odot = time_derivative(t, o_n)
    src = np.exp(a * t - U) * (odot + a * (np.asarray(o_n) - np.asarray(log_k) / (beta * N)))
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (src[1:] + src[:-1]) * np.diff(t))])
    decay = np.exp(-a * t + U)
    return decay * e0 + decay * integral


def fit_decay_rate(t, y, floor: float = 1e-12) -> float:
    """Least-squares slope of -log y over the points where y exceeds ``floor``."""
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    keep = y > floor
    if keep.sum() < 2:
        raise ValueError("not enough positive samples to fit a decay rate")
    slope = np.polyfit(t[keep], np.log(y[keep]), 1)[0]
    return float(-slope)


def gronwall_audit(records, beta: float, c_ls: float, c_me: float, N: int, tol: float = 1e-8,
                   kappas=None, fit_window=None) -> GronwallReport:
    """Evaluate the Gronwall bound along a trajectory and the LSI chain.

    ``kappas`` (one per record) are convexity certificates; any value <= 0
    invalidates the LSI hypothesis and raises :class:`InvalidLSIError`.
    """
    if kappas is not None and np.any(np.asarray(kappas) <= 0):
        raise InvalidLSIError("convexity certificate kappa <= 0 along the trajectory")
    t = np.array([r.t for r in records])
    e_script = np.array([r.e_script for r in records])
    rhs = gronwall_rhs(t, e_script[0], c_ls, beta, c_me,
                       [r.sup_grad_u for r in records], [r.o_n for r in records],
                       [r.log_k for r in records], N)
    margin = rhs + tol - e_script
    h_q = np.array([r.h_rel_q for r in records])
    fisher = np.array([r.fisher for r in records])
    lsi_viol = int(np.sum(fisher < h_q / c_ls - tol))
    sel = np.ones_like(t, dtype=bool) if fit_window is None else (t >= fit_window[0]) & (t <= fit_window[1])
    rate = fit_decay_rate(t[sel], h_q[sel])
    return GronwallReport(float(margin.min()), int(np.sum(margin < 0)), rate,
                          4.0 / (beta * c_ls), 1.0 / (beta * c_ls), lsi_viol, rhs)
