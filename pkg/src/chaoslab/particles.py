"""Particle dynamics: overdamped Langevin SDE, MALA samplers and ensembles.

Configurations are numpy arrays: shape ``(N,)`` in one dimension and
``(N, d)`` otherwise; batches of replicas stack a leading axis. Forces are
computed by direct O(N^2) summation.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import potential_at
from .errors import DomainError, MixingError, StepFailure
from .grid import EPS_FLOOR, Grid1D, GridDensity, convolve_grad_at, double_integral
from .kernels import ConfinementSpec, KernelSpec, confinement_eval, confinement_grad, confinement_hess

DT_MIN_FACTOR = 2.0**-20
N_MAX = 4096


@dataclass
class ParticleConfig:
    positions: np.ndarray
    d: int = 1

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if self.d == 1 and x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        expected = 1 if self.d == 1 else 2
        if x.ndim != expected or (self.d > 1 and x.shape[1] != self.d):
            raise ValueError(f"positions must have shape (N,) for d=1 or (N, d) otherwise; got {x.shape}")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if not np.all(np.isfinite(x)):
            raise DomainError("non-finite particle positions")
        self.positions = x

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def check_distinct(self) -> None:
        if min_separation(self.positions) == 0.0:
            raise DomainError("coincident particles")


@dataclass
class Ensemble:
    """M independent replicas and the stream identifiers that drive them."""

    configs: np.ndarray  # (M, N) or (M, N, d)
    seeds: tuple
    t: float = 0.0

    @property
    def M(self) -> int:
        return self.configs.shape[0]


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    """Counter-based stream keyed by (master seed, replica id)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(replica)])))


def thread_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("CHAOSLAB_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# energies and forces
# ---------------------------------------------------------------------------

def min_separation(X) -> float:
    """Smallest pairwise distance of one configuration ((N,) or (N, d))."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        return np.inf
    diff = X[:, None] - X[None, :]
    r = np.abs(diff) if X.ndim == 1 else np.sqrt(np.sum(diff**2, axis=-1))
    return float(r[~np.eye(X.shape[0], dtype=bool)].min())


def interaction_drift(X, spec: KernelSpec, one_d: bool = True) -> np.ndarray:
    """-(1/N) sum_{j != i} grad_1 g(x_i, x_j) for a configuration or a batch.

    With ``one_d`` the last axis indexes particles; otherwise the last two
    axes are (particle, coordinate).
    """
    X = np.asarray(X, dtype=float)
    if spec.is_zero:
        return np.zeros_like(X)
    if one_d:
        diff = X[..., :, None] - X[..., None, :]
        r = np.abs(diff)
        N = X.shape[-1]
    else:
        diff = X[..., :, None, :] - X[..., None, :, :]
        r = np.sqrt(np.sum(diff**2, axis=-1))
        N = X.shape[-2]
    off = ~np.eye(N, dtype=bool)
    if spec.singular and np.any(r[..., off] == 0.0):
        raise DomainError("coincident points for a singular kernel")
    if one_d and spec.family == "log":
        # -grad_1 g = 1/(x - y); the identity keeps the diagonal finite and cancels it
        eye = np.eye(N)
        return np.sum(1.0 / (diff + eye) - eye, axis=-1) / N
    safe = np.where(off, r, 1.0)
    coef = np.where(off, spec.dphi(safe) / safe, 0.0)
    if one_d:
        return -np.sum(coef * diff, axis=-1) / N
    return -np.sum(coef[..., None] * diff, axis=-2) / N


def drift(X, spec: KernelSpec, V: ConfinementSpec, one_d: bool = True) -> np.ndarray:
    return interaction_drift(X, spec, one_d) - confinement_grad(V, X)


def pair_energy(X, spec: KernelSpec, one_d: bool = True) -> np.ndarray:
    """(1/2) sum_{i != j} g(x_i, x_j); +inf at coincident points of singular kernels."""
    X = np.asarray(X, dtype=float)
    if one_d:
        r = np.abs(X[..., :, None] - X[..., None, :])
        N = X.shape[-1]
    else:
        r = np.sqrt(np.sum((X[..., :, None, :] - X[..., None, :, :]) ** 2, axis=-1))
        N = X.shape[-2]
    off = ~np.eye(N, dtype=bool)
    with np.errstate(divide="ignore"):
        vals = np.where(off, spec.phi(np.where(off, r, 1.0)), 0.0)
    if spec.singular:
        vals = np.where(off & (r == 0.0), np.inf, vals)
    return 0.5 * vals.sum(axis=(-1, -2))


def hamiltonian(X, spec: KernelSpec, V: ConfinementSpec, one_d: bool = True) -> np.ndarray:
    """H_N = (1/2N) sum_{i != j} g(x_i, x_j) + sum_i V(x_i)."""
    X = np.asarray(X, dtype=float)
    N = X.shape[-1] if one_d else X.shape[-2]
    Vsum = confinement_eval(V, X)
    Vsum = Vsum.sum(axis=-1)
    return pair_energy(X, spec, one_d) / N + Vsum


# ---------------------------------------------------------------------------
# Euler-Maruyama with Weyl-chamber retries
# ---------------------------------------------------------------------------

def _ordered(y, order):
    return bool(np.all(np.diff(y[order]) > 0.0))


def _em_proposal(x, spec, V, beta, h, rng, one_d):
    step = x + h * drift(x, spec, V, one_d)
    if np.isfinite(beta):
        step = step + np.sqrt(2.0 * h / beta) * rng.standard_normal(x.shape)
    return step


def _advance(x, spec, V, beta, dt, rng, *, first=None, on_underflow="reflect", replica=None, one_d=True):
    """Advance one replica by ``dt``, halving the step whenever a pair would cross.

    Time is tracked in integer units of dt_min = dt 2^-20 so that the
    substeps add up to exactly ``dt``. ``first`` is an already drawn proposal
    for the full step (used by the batched driver).
    """
    keep_order = one_d and spec.singular and x.size > 1
    order = np.argsort(x, kind="stable") if keep_order else None
    units = 1 << 20
    dt_min = dt * DT_MIN_FACTOR
    remaining, h_units = units, units
    halvings = 0
    while remaining > 0:
        h_units = min(h_units, remaining)
        h = h_units * dt_min
        if first is not None:
            y, first = first, None
        else:
            y = _em_proposal(x, spec, V, beta, h, rng, one_d)
        if not np.all(np.isfinite(y)):
            raise StepFailure("non-finite positions after a step", replica, {"dt": h})
        if not keep_order or _ordered(y, order):
            x = y
            remaining -= h_units
            h_units = min(2 * h_units, units)  # let the step grow back after a close encounter
            continue
        if h_units > 1:
            h_units //= 2
            halvings += 1
            continue
        # step already at dt_min: reflect the offending pairs back into the chamber
        if on_underflow == "raise":
            raise StepFailure("step size underflow below dt * 2^-20", replica,
                              {"dt_min": dt_min, "halvings": halvings, "min_gap": float(np.min(np.diff(np.sort(y))))})
        y = y.copy()
        y[order] = np.sort(y)
        if not np.all(np.diff(y[order]) > 0.0):
            raise StepFailure("reflection produced coincident particles", replica, {"dt_min": dt_min})
        x = y
        remaining -= h_units
    return x


def sde_step(cfg: ParticleConfig, spec: KernelSpec, V: ConfinementSpec, beta: float, dt: float, rng,
             on_underflow: str = "reflect") -> ParticleConfig:
    """One Euler-Maruyama step of the N-particle Langevin dynamics.

    ``beta = inf`` switches the noise off. In one dimension with a singular
    kernel the coordinate order is preserved: a step that would reorder a
    pair is retried with half the step size down to dt 2^-20, after which
    the offending particles are reflected (or a :class:`StepFailure` is
    raised when ``on_underflow="raise"``).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    one_d = cfg.d == 1
    if spec.singular:
        cfg.check_distinct()
    x = _advance(cfg.positions, spec, V, beta, dt, rng, on_underflow=on_underflow, one_d=one_d)
    return ParticleConfig(x, cfg.d)


def tamed_increment(b, h, beta):
    """h b / (1 + h |b| / s) with s = sqrt(2h/beta): the drift move never exceeds the noise scale."""
    if not np.isfinite(beta):
        return h * b
    s = np.sqrt(2.0 * h / beta)
    return h * b / (1.0 + h * np.abs(b) / s)


def _pair_terms(Y, spec, derivatives=True):
    """Pair energy (1/2N) sum g, pair drift and pair Hessian of a (M, N) batch from one distance matrix."""
    M, N = Y.shape
    diff = Y[:, :, None] - Y[:, None, :]
    eye = np.eye(N, dtype=bool)
    r = np.abs(diff)
    r[:, eye] = 1.0
    with np.errstate(divide="ignore"):
        p = spec.phi(r)
    p[:, eye] = 0.0
    energy = 0.5 * p.sum(axis=(1, 2)) / N
    if not derivatives:
        return energy, None, None
    d1 = spec.dphi(r)
    d1[:, eye] = 0.0
    pair_drift = -np.sum(d1 * np.sign(diff), axis=2) / N
    w = spec.d2phi(r) / N
    w[:, eye] = 0.0
    hess = -w
    hess[:, eye] = w.sum(axis=2)
    return energy, pair_drift, hess


def _pair_hessian(Y, spec):
    """Hessian of (1/2N) sum_{i != j} g(y_i - y_j) for a (M, N) batch in d = 1."""
    return _pair_terms(Y, spec)[2]


def implicit_drift_step(X, Z, spec: KernelSpec, V: ConfinementSpec, h: float, tol: float = 1e-10,
                        max_iter: int = 100) -> np.ndarray:
    """Solve y = z - h grad H_N(y) for every row by damped Newton.

    For convex pair energies (log, Riesz) and convex V the map is the
    minimiser of |y - z|^2 / (2h) + H_N(y). The pair energy is infinite on
    the collision set, so the minimum sits in one order cell; by the
    rearrangement inequality it is the cell of z. Newton starts from z and
    the line search never leaves that cell. Rows where z has ties (a null
    event) fall back to the cell of x.
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    M, N = X.shape
    order = np.argsort(Z, axis=1, kind="stable")
    Y = Z.copy()
    tied = ~np.all(np.diff(np.take_along_axis(Z, order, axis=1), axis=1) > 0.0, axis=1)
    if tied.any():
        order[tied] = np.argsort(X[tied], axis=1, kind="stable")
        Y[tied] = X[tied]
    zero = spec.is_zero

    def terms(Yb, Zb, derivatives=True):
        if zero:
            e, pd, ph = np.zeros(len(Yb)), np.zeros_like(Yb), np.zeros(Yb.shape + (N,))
        else:
            e, pd, ph = _pair_terms(Yb, spec, derivatives)
        obj = np.sum((Yb - Zb) ** 2, axis=1) / (2.0 * h) + e + confinement_eval(V, Yb).sum(axis=1)
        return obj, pd, ph

    def ordered(Yb, ob):
        return np.all(np.diff(np.take_along_axis(Yb, ob, axis=1), axis=1) > 0.0, axis=1)

    phi, pdrift, phess = terms(Y, Z)
    active = np.ones(M, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Ya, Za = Y[idx], Z[idx]
        G = (Ya - Za) / h - pdrift[idx] + confinement_grad(V, Ya)
        done = np.max(np.abs(G), axis=1) * h < tol
        active[idx[done]] = False
        if done.all():
            break
        keep = ~done
        idx, Ya, Za, G = idx[keep], Ya[keep], Za[keep], G[keep]
        Hs = phess[idx]
        Hs[:, np.arange(N), np.arange(N)] += 1.0 / h + confinement_hess(V, Ya)
        step = -np.linalg.solve(Hs, G[..., None])[..., 0]
        phi0 = phi[idx]
        slope = np.sum(G * step, axis=1)
        slack = 1e-12 * (1.0 + np.abs(phi0))  # objective roundoff; Newton steps near the root are accepted
        thresh = phi0 + slack
        alpha = np.ones(idx.size)
        trial = Ya + step
        good = np.zeros(idx.size, dtype=bool)
        for _ls in range(60):
            cand = ~good & ordered(trial, order[idx])
            if cand.any():
                obj = terms(trial[cand], Za[cand], derivatives=False)[0]
                good[cand] = obj <= thresh[cand] + 1e-4 * alpha[cand] * slope[cand]
            if good.all():
                break
            alpha[~good] *= 0.5
            trial[~good] = Ya[~good] + alpha[~good, None] * step[~good]
        moved = good
        Y[idx[moved]] = trial[moved]
        if moved.any():
            p, d, hh = terms(Y[idx[moved]], Z[idx[moved]])
            phi[idx[moved]], pdrift[idx[moved]], phess[idx[moved]] = p, d, hh
    if active.any():
        raise StepFailure("implicit drift step did not converge", int(np.nonzero(active)[0][0]),
                          {"max_iter": max_iter})
    return Y


def _sde_batch(X, spec, V, beta, dt, rngs, replicas, on_underflow="reflect", chamber="halving", tame=False,
               scheme="explicit"):
    """One step for a (M, N) batch; every replica draws only from its own stream.

    ``chamber="halving"`` retries ordering violations with halved steps as in
    :func:`sde_step`; ``chamber="reflect"`` applies the hard-core reflection
    at once (the proposal is put back in chamber order). The second is the
    practical choice at large N, where gaps close far more often than the
    halving loop can absorb. ``tame=True`` replaces the drift move by
    :func:`tamed_increment`, which removes the spurious kicks explicit Euler
    gives to nearly coincident pairs of a singular kernel.
    """
    M, N = X.shape
    if scheme == "implicit":
        Z = X.copy()
        if np.isfinite(beta):
            Z += np.sqrt(2.0 * dt / beta) * np.stack([r.standard_normal(N) for r in rngs])
        Y = implicit_drift_step(X, Z, spec, V, dt)
        if not (spec.singular and N > 1):
            return Y
        # the resolvent lives in the order cell of Z; relabel back into the chamber of X
        # (drift and noise are exchangeable, so the unlabelled law is unchanged)
        out = np.empty_like(Y)
        np.put_along_axis(out, np.argsort(X, axis=1, kind="stable"), np.sort(Y, axis=1), axis=1)
        return out
    b = drift(X, spec, V)
    prop = X + (tamed_increment(b, dt, beta) if tame else dt * b)
    if np.isfinite(beta):
        noise = np.stack([r.standard_normal(N) for r in rngs])
        prop = prop + np.sqrt(2.0 * dt / beta) * noise
    if not (spec.singular and N > 1):
        return prop
    order = np.argsort(X, axis=1, kind="stable")
    ok = np.all(np.diff(np.take_along_axis(prop, order, axis=1), axis=1) > 0.0, axis=1)
    if chamber == "reflect":
        bad = np.nonzero(~ok)[0]
        if bad.size:
            fixed = np.empty_like(prop[bad])
            np.put_along_axis(fixed, order[bad], np.sort(prop[bad], axis=1), axis=1)
            if np.any(np.diff(np.sort(fixed, axis=1), axis=1) == 0.0):
                raise StepFailure("reflection produced coincident particles", int(replicas[bad[0]]), {"dt": dt})
            prop[bad] = fixed
        return prop
    for k in np.nonzero(~ok)[0]:
        prop[k] = _advance(X[k], spec, V, beta, dt, rngs[k], first=prop[k], on_underflow=on_underflow,
                           replica=replicas[k])
    return prop


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

@dataclass
class EnsembleRun:
    times: np.ndarray
    snapshots: list  # one (M, N) array per snapshot time
    master_seed: int
    params: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def run_ensemble(sampler, dynamics: str, params: dict, M: int, t_end: float, cadence: float | None,
                 master_seed: int, threads: int | None = None) -> EnsembleRun:
    """Run M independent replicas and record snapshots every ``cadence``.

    ``sampler(rng)`` draws the initial positions of one replica from that
    replica's own stream. ``params`` holds ``spec``, ``V``, ``beta`` and
    ``dt`` (plus ``target``/``mu`` for ``dynamics="mala"``, where one MALA
    step plays the role of one time step). Replicas are split into
    contiguous blocks across ``threads`` workers; results do not depend on
    the split.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    rngs = [replica_rng(master_seed, k) for k in range(M)]
    X = np.stack([np.asarray(sampler(r), dtype=float) for r in rngs])
    if X.shape[1] > N_MAX:
        raise ValueError(f"N is capped at {N_MAX}")
    spec, V, beta, dt = params["spec"], params["V"], params["beta"], params["dt"]
    n_steps = int(round(t_end / dt))
    every = max(1, int(round(cadence / dt))) if cadence else max(n_steps, 1)
    if dynamics == "sde":
        if spec.singular:
            X = np.sort(X, axis=1)

        def block_step(lo, hi):
            return _sde_batch(X[lo:hi], spec, V, beta, dt, rngs[lo:hi], list(range(lo, hi)),
                              params.get("on_underflow", "reflect"), params.get("chamber", "halving"),
                              params.get("tame", False), params.get("scheme", "explicit"))
    elif dynamics == "mala":
        kernel = _MalaKernel(params.get("target", "gibbs"), spec, beta, X.shape[1], V=V, mu=params.get("mu"))

        def block_step(lo, hi):
            return kernel.step(X[lo:hi], dt, rngs[lo:hi])[0]
    else:
        raise ValueError(f"unknown dynamics {dynamics!r}")
    T = thread_count(threads)
    bounds = np.linspace(0, M, min(T, M) + 1).astype(int)
    times, snaps = [0.0], [X.copy()]
    with ThreadPoolExecutor(max_workers=len(bounds) - 1) as pool:
        for k in range(1, n_steps + 1):
            parts = list(pool.map(lambda b: block_step(*b), zip(bounds[:-1], bounds[1:])))
            X = np.concatenate(parts, axis=0)
            if k % every == 0 or k == n_steps:
                times.append(k * dt)
                snaps.append(X.copy())
    return EnsembleRun(np.array(times), snaps, master_seed, dict(params, M=M, t_end=t_end, cadence=cadence))


# ---------------------------------------------------------------------------
# Metropolis-adjusted Langevin
# ---------------------------------------------------------------------------

class _MalaKernel:
    """Log density and gradient for the two supported targets (d = 1)."""

    def __init__(self, target, spec, beta, N, V=None, mu: GridDensity | None = None):
        if target not in ("gibbs", "modulated"):
            raise ValueError("target must be 'gibbs' or 'modulated'")
        if target == "gibbs" and V is None:
            raise ValueError("the gibbs target needs a confinement V")
        if target == "modulated" and mu is None:
            raise ValueError("the modulated target needs a density mu")
        self.target, self.spec, self.beta, self.N, self.V, self.mu = target, spec, beta, N, V, mu
        if target == "modulated":
            self.background = 0.5 * double_integral(spec, mu) if not spec.is_zero else 0.0
            vals = mu.values
            good = vals > EPS_FLOOR
            logmu = np.log(np.where(good, vals, 1.0))
            glog = np.gradient(logmu, mu.grid.h)
            inner = good.copy()
            inner[1:-1] &= good[:-2] & good[2:]
            inner[[0, -1]] = False
            self._glog = np.where(inner, glog, 0.0)

    def logp(self, X):
        N, b = self.N, self.beta
        if self.target == "gibbs":
            return -b * hamiltonian(X, self.spec, self.V)
        dens = self.mu(X)
        with np.errstate(divide="ignore"):
            logmu = np.log(dens).sum(axis=-1)
        out = np.full(X.shape[0], -np.inf)
        live = np.isfinite(logmu)
        if live.any():
            Y = X[live]
            pair = pair_energy(Y, self.spec) / N
            cross = potential_at(self.spec, self.mu, Y).sum(axis=-1) if not self.spec.is_zero else 0.0
            out[live] = -b * (pair - cross + N * self.background) + logmu[live]
        return out

    def grad(self, X):
        b = self.beta
        if self.target == "gibbs":
            return b * drift(X, self.spec, self.V)
        g = b * interaction_drift(X, self.spec)
        if not self.spec.is_zero:
            g = g + b * convolve_grad_at(self.spec, self.mu, X)
        return g + np.interp(X, self.mu.grid.centers, self._glog, left=0.0, right=0.0)

    def step(self, X, tau, rngs, adjust=True, state=None):
        """One MALA move per chain; returns (new X, accepted mask, new state)."""
        if state is None:
            lp, gr = self.logp(X), self.grad(X)
        else:
            lp, gr = state
        xi = np.stack([r.standard_normal(X.shape[1]) for r in rngs])
        mean_fwd = X + tau * gr
        Y = mean_fwd + np.sqrt(2.0 * tau) * xi
        if not adjust:
            return Y, np.ones(X.shape[0], bool), None
        lp_y = self.logp(Y)
        gr_y = np.zeros_like(Y)
        fin = np.isfinite(lp_y)
        if fin.any():
            gr_y[fin] = self.grad(Y[fin])
        mean_bwd = Y + tau * gr_y
        log_q_fwd = -np.sum((Y - mean_fwd) ** 2, axis=1) / (4.0 * tau)
        log_q_bwd = -np.sum((X - mean_bwd) ** 2, axis=1) / (4.0 * tau)
        with np.errstate(invalid="ignore"):
            log_alpha = lp_y - lp + log_q_bwd - log_q_fwd
        u = np.array([r.random() for r in rngs])
        acc = fin & (np.log(u) < log_alpha)
        Xn = np.where(acc[:, None], Y, X)
        lp_n = np.where(acc, lp_y, lp)
        gr_n = np.where(acc[:, None], gr_y, gr)
        return Xn, acc, (lp_n, gr_n)


@dataclass
class MalaResult:
    samples: np.ndarray  # (n_kept, n_chains, N)
    acceptance: float
    chain_acceptance: np.ndarray
    outside_mass: float = 0.0  # mass of e^{-beta V} outside the support window of mu (modulated target)

    def flat(self) -> np.ndarray:
        """All kept configurations as an (n_kept * n_chains, N) array."""
        return self.samples.reshape(-1, self.samples.shape[-1])


def default_init_density(V: ConfinementSpec, beta: float, grid: Grid1D | None = None) -> GridDensity:
    """e^{-beta V} on a window, used to start gibbs chains."""
    if grid is None:
        grid = Grid1D(-10.0, 10.0, 2048)
    logw = -beta * confinement_eval(V, grid.centers)
    return GridDensity.from_values(grid, np.exp(logw - logw.max()))


def mala_sample(target: str, spec: KernelSpec, beta: float, N: int, n_steps: int, dt: float, rng,
                *, V: ConfinementSpec | None = None, mu: GridDensity | None = None, n_chains: int = 1,
                burn_in: int = 0, thin: int = 1, x0=None, adjust: bool = True, init_grid: Grid1D | None = None,
                check_window: int = 1000, min_acceptance: float = 0.01) -> MalaResult:
    """Metropolis-adjusted Langevin sampling of P_{N,beta} (gibbs) or Q_{N,beta}(mu) (modulated).

    ``rng`` is a Generator or a list of per-chain Generators. Chains start
    iid from ``mu`` (modulated) or from e^{-beta V} (gibbs) unless ``x0``
    is given. After ``check_window`` steps an acceptance rate below
    ``min_acceptance`` raises :class:`MixingError`. ``adjust=False`` skips
    the Metropolis correction (the unadjusted Langevin algorithm).
    """
    rngs = list(rng) if isinstance(rng, (list, tuple)) else [rng] * n_chains
    if len(rngs) != n_chains:
        raise ValueError("need one generator per chain")
    kernel = _MalaKernel(target, spec, beta, N, V=V, mu=mu)
    if x0 is None:
        init = mu if target == "modulated" else default_init_density(V, beta, init_grid)
        X = np.stack([init.sample(r, N) for r in rngs])
    else:
        X = np.array(np.broadcast_to(np.asarray(x0, float), (n_chains, N)))
    kept = []
    accepted = np.zeros(n_chains)
    state = None
    for k in range(1, n_steps + 1):
        X, acc, state = kernel.step(X, dt, rngs, adjust=adjust, state=state)
        accepted += acc
        if adjust and k == check_window and accepted.sum() / (k * n_chains) < min_acceptance:
            raise MixingError(f"acceptance {accepted.sum() / (k * n_chains):.4f} below {min_acceptance} "
                              f"after {k} steps; try a smaller dt")
        if k > burn_in and (k - burn_in) % thin == 0:
            kept.append(X.copy())
    samples = np.stack(kept) if kept else np.empty((0, n_chains, N))
    rate = accepted / max(n_steps, 1)
    outside = 0.0
    if target == "modulated" and V is not None:
        outside = window_truncation(V, beta, mu.grid.lo, mu.grid.hi)
    return MalaResult(samples, float(rate.mean()), rate, outside)


def window_truncation(V: ConfinementSpec, beta: float, lo: float, hi: float) -> float:
    """Mass of the normalised density e^{-beta V} lying outside [lo, hi]."""
    from scipy.integrate import quad

    w = lambda x: np.exp(-beta * float(confinement_eval(V, np.array([x]))[0]))
    total = quad(w, -np.inf, np.inf)[0]
    return float((quad(w, -np.inf, lo)[0] + quad(w, hi, np.inf)[0]) / total)
