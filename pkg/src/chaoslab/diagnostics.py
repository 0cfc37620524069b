"""Scalar functionals of configurations and densities.

Modulated energies, error terms, partition-function estimates, exponential
moments, commutator functionals and marginal distances. Configurations in
d = 1 are arrays of shape ``(N,)`` (one configuration) or ``(M, N)`` (a
batch); point evaluations of ``g*mu`` against a grid density are exact
because the density is piecewise constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EstimatorError, InsufficientSamplesError
from .grid import GridDensity, GridField, convolve_at, double_integral, virial_point_integrals
from .kernels import KernelSpec

CHUNK = 1 << 21


# ---------------------------------------------------------------------------
# modulated energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModulatedEnergyBreakdown:
    pair_sum: float
    cross: float
    background: float
    total: float


def _config(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError("grid functionals take one-dimensional configurations of shape (N,)")
    return X


def _pair_matrix(spec: KernelSpec, X):
    r = np.abs(X[..., :, None] - X[..., None, :])
    off = ~np.eye(X.shape[-1], dtype=bool)
    if spec.singular and np.any(r[..., off] == 0.0):
        raise DomainError("coincident points for a singular kernel")
    with np.errstate(divide="ignore"):
        vals = spec.phi(r)
    return np.where(off, vals, 0.0)


def potential_at(spec: KernelSpec, mu: GridDensity, x) -> np.ndarray:
    """(g*mu)(x) at many points, evaluated in chunks to bound memory."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    out = np.empty_like(flat)
    step = max(1, CHUNK // mu.grid.edges.size)
    for s in range(0, flat.size, step):
        out[s:s + step] = convolve_at(spec, mu, flat[s:s + step])
    return out.reshape(x.shape)


def modulated_energy(X, mu: GridDensity, spec: KernelSpec) -> ModulatedEnergyBreakdown:
    """Three-term breakdown of F_N(X_N, mu), diagonal removed from the pair sum."""
    X = _config(X)
    N = X.size
    pair = float(_pair_matrix(spec, X).sum()) / (2.0 * N**2)
    cross = float(potential_at(spec, mu, X).sum()) / N
    background = 0.5 * double_integral(spec, mu)
    return ModulatedEnergyBreakdown(pair, cross, background, pair - cross + background)


def modulated_energy_batch(Xs, mu: GridDensity, spec: KernelSpec, background: float | None = None) -> np.ndarray:
    """F_N for every row of ``Xs`` (shape (M, N))."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    N = Xs.shape[1]
    if background is None:
        background = 0.5 * double_integral(spec, mu)
    pair = _pair_matrix(spec, Xs).sum(axis=(1, 2)) / (2.0 * N**2)
    cross = potential_at(spec, mu, Xs).sum(axis=1) / N
    return pair - cross + background


def unrenormalized_energy(X, mu: GridDensity, spec: KernelSpec) -> float:
    """Full double integral against (emp - mu)^2, diagonal included; bounded kernels only."""
    if spec.singular:
        raise DomainError("the unrenormalised energy needs a kernel that is finite on the diagonal")
    X = _config(X)
    N = X.size
    return modulated_energy(X, mu, spec).total + float(spec.phi(0.0)) / (2.0 * N)


# ---------------------------------------------------------------------------
# constants and error terms
# ---------------------------------------------------------------------------

@dataclass
class TheoryConstants:
    """Constants the theory leaves unspecified; defaults are 1.0 until calibrated."""

    c_riesz: float = 1.0
    c_re: float = 0.0
    c_me: float = 1.0
    c_beta_assm: float = 0.0
    calibrated: tuple = ()

    def validate(self, beta: float | None = None) -> None:
        if not self.c_riesz > 0:
            raise ValueError("c_riesz must be positive")
        if self.c_re < 0 or self.c_me < 0:
            raise ValueError("c_re and c_me must be nonnegative")
        if self.c_beta_assm < 0 or (beta is not None and self.c_beta_assm * beta >= 1):
            raise ValueError("c_beta_assm must lie in [0, 1/beta)")

    def to_dict(self) -> dict:
        return {"c_riesz": self.c_riesz, "c_re": self.c_re, "c_me": self.c_me,
                "c_beta_assm": self.c_beta_assm, "calibrated": list(self.calibrated)}


@dataclass(frozen=True)
class ErrorTerms:
    o_n: float
    mode: str


def error_mode(spec: KernelSpec) -> str:
    if spec.family not in ("log", "riesz"):
        raise DomainError("error terms are defined for log and Riesz kernels")
    if spec.family == "log":
        return "log"
    return "riesz_supercoulomb" if spec.s >= spec.d - 2 else "riesz_subcoulomb"


def _subcoulomb_exponent(s, d):
    return 2.0 * (d - s) / (2.0 * (d - s) + s * (d + 2))


def riesz_lower_bound(N: int, sup_mu: float, spec: KernelSpec, constants: TheoryConstants) -> float:
    """Floor for F_N(X_N, mu) valid for every configuration (up to the constant c_riesz)."""
    d, s, C = spec.d, (0.0 if spec.family == "log" else spec.s), constants.c_riesz
    is_log = spec.family == "log"
    if spec.family not in ("log", "riesz"):
        raise DomainError("the Riesz lower bound needs a log or Riesz kernel")
    if s >= d - 2:
        log_part = np.log(N * sup_mu) / (2.0 * N * d) if is_log else 0.0
        return -(log_part + C * sup_mu ** (s / d) * N ** (s / d - 1.0))
    log_part = C * np.log(N * sup_mu) / N if is_log else 0.0
    return -(log_part + C * sup_mu ** (s / d) * N ** (-_subcoulomb_exponent(s, d)))


def riesz_upper_bound(N: int, sup_mu: float, spec: KernelSpec, constants: TheoryConstants, beta: float) -> float:
    """Upper bound for log K_{N,beta}(mu) obtained by inserting the F_N floor."""
    d, s, C = spec.d, (0.0 if spec.family == "log" else spec.s), constants.c_riesz
    is_log = spec.family == "log"
    if s >= d - 2:
        val = (np.log(N * sup_mu) / (2.0 * d) if is_log else 0.0) + C * sup_mu ** (s / d) * N ** (s / d)
    else:
        val = (C * np.log(N * sup_mu) if is_log else 0.0) + C * sup_mu ** (s / d) * N ** (1.0 - _subcoulomb_exponent(s, d))
    return beta * val


def jensen_lower_bound(mu: GridDensity, spec: KernelSpec, beta: float) -> float:
    """log K >= -beta N E_{mu^N}[F_N] = (beta/2) iint g dmu dmu."""
    return 0.5 * beta * double_integral(spec, mu)


def fractional_laplacian(values, h: float, alpha: float, n_terms: int | None = None) -> np.ndarray:
    """Grünwald-Letnikov approximation of (-Delta)^{alpha/2} on a uniform 1D grid.

    Uses the symmetric Riesz form -(D_left^alpha + D_right^alpha) / (2 cos(pi alpha / 2))
    with zero extension outside the window; negative alpha gives the fractional
    integral of the same family.
    """
    f = np.asarray(values, dtype=float)
    n = f.size if n_terms is None else n_terms
    w = np.empty(n)
    w[0] = 1.0
    for k in range(1, n):
        w[k] = w[k - 1] * (1.0 - (alpha + 1.0) / k)
    left = np.convolve(f, w)[: f.size]
    right = np.convolve(f[::-1], w)[: f.size][::-1]
    c = np.cos(np.pi * alpha / 2.0)
    if abs(c) < 1e-14:
        raise DomainError("the Grünwald-Letnikov Riesz form is singular at odd integer orders")
    return -(left + right) / (2.0 * c) / h**alpha


def error_terms(N: int, mu: GridDensity | float, spec: KernelSpec, constants: TheoryConstants) -> ErrorTerms:
    """The additive error o_N for the Gronwall quantity, clipped at zero."""
    mode = error_mode(spec)
    sup_mu = mu if np.isscalar(mu) else mu.sup_norm
    d, s = spec.d, (0.0 if spec.family == "log" else spec.s)
    if mode != "riesz_subcoulomb":
        o = -riesz_lower_bound(N, sup_mu, spec, constants)
    else:
        if np.isscalar(mu):
            raise ValueError("the sub-Coulomb error term needs the density, not only its sup norm")
        frac = float(np.max(np.abs(fractional_laplacian(mu.values, mu.grid.h, s + 1.0 - d))))
        q = 2.0 * (d - s) / (d + 2.0)
        denom = (s + q) * (1.0 + s)
        o = frac * N ** (-(s + 1.0 + q) / denom) + sup_mu ** ((2.0 + s) / (d + 2.0)) * N ** (-q / denom)
    return ErrorTerms(max(float(o), 0.0), mode)


def o_n_series(t, mus, N, spec, constants):
    """o_N at each time and its time derivative (central differences)."""
    o = np.array([error_terms(N, m, spec, constants).o_n for m in mus])
    t = np.asarray(t, dtype=float)
    odot = np.gradient(o, t) if t.size > 1 else np.zeros_like(o)
    return o, odot


def calibrate_c_riesz(F_values, N: int, sup_mu: float, spec: KernelSpec, safety: float = 1.05) -> float:
    """Smallest c_riesz for which every sampled F_N sits above the floor (times ``safety``)."""
    F_min = float(np.min(F_values))
    d, s = spec.d, (0.0 if spec.family == "log" else spec.s)
    log_part = np.log(N * sup_mu) / (2.0 * N * d) if spec.family == "log" else 0.0
    scale = sup_mu ** (s / d) * N ** (s / d - 1.0)
    need = (-F_min - log_part) / scale
    return float(max(need * safety, 1e-6))


# ---------------------------------------------------------------------------
# partition functions and exponential moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogMeanExp:
    estimate: float
    std_error: float
    ess: float


def log_mean_exp(logw) -> LogMeanExp:
    """log of the sample mean of exp(logw) with a jackknife standard error."""
    logw = np.asarray(logw, dtype=float)
    M = logw.size
    if M < 2:
        raise InsufficientSamplesError("need at least two samples")
    top = logw.max()
    w = np.exp(logw - top)
    S = w.sum()
    est = top + np.log(S / M)
    loo = top + np.log(np.maximum(S - w, np.finfo(float).tiny) / (M - 1))
    se = float(np.sqrt((M - 1) / M * np.sum((loo - loo.mean()) ** 2)))
    ess = float(S**2 / np.sum(w**2))
    return LogMeanExp(float(est), se, ess)


def sample_product(mu: GridDensity, N: int, M: int, rng) -> np.ndarray:
    return mu.sample(rng, (M, N))


def log_partition_estimate(mu: GridDensity, spec: KernelSpec, beta: float, N: int, M_samples: int, rng,
                           min_ess: float = 30.0, return_details: bool = False):
    """Importance-sampling estimate of log K_{N,beta}(mu) from iid mu^{(x)N} draws."""
    if N > 16:
        raise ValueError("importance sampling from mu^N is restricted to N <= 16")
    if spec.is_zero:
        res = LogMeanExp(0.0, 0.0, float(M_samples))
        return res if return_details else (res.estimate, res.std_error)
    X = sample_product(mu, N, M_samples, rng)
    F = modulated_energy_batch(X, mu, spec)
    res = log_mean_exp(-beta * N * F)
    if res.ess < min_ess:
        raise EstimatorError(f"effective sample size {res.ess:.1f} < {min_ess}: estimate unreliable")
    return res if return_details else (res.estimate, res.std_error)


@dataclass(frozen=True)
class ExponentialMomentCheck:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.lhs_se, self.rhs_se))

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def exponential_moment_check(mu: GridDensity, spec: KernelSpec, beta: float, N: int, q_samples,
                             M_is: int, rng, batch_se: float | None = None) -> ExponentialMomentCheck:
    """log E_Q[exp((beta/2) N F_N)] against log K_{beta/2} - log K_beta.

    ``q_samples`` are configurations drawn from Q_{N,beta}(mu) (shape (M, N)).
    Correlated samples should pass ``batch_se``, a standard error computed
    from independent chains; otherwise the jackknife error is used.
    """
    F = modulated_energy_batch(q_samples, mu, spec)
    lhs = log_mean_exp(0.5 * beta * N * F)
    half = log_partition_estimate(mu, spec, 0.5 * beta, N, M_is, rng, return_details=True)
    full = log_partition_estimate(mu, spec, beta, N, M_is, rng, return_details=True)
    return ExponentialMomentCheck(lhs.estimate, lhs.std_error if batch_se is None else batch_se,
                                  half.estimate - full.estimate, float(np.hypot(half.std_error, full.std_error)))


# ---------------------------------------------------------------------------
# commutator
# ---------------------------------------------------------------------------

def _divided_difference(v: GridField, a, b):
    va, vb = v(a), v(b)
    dv_da = np.interp(a, v.grid.centers, np.gradient(v.values, v.grid.h))
    with np.errstate(divide="ignore", invalid="ignore"):
        D = (va - vb) / (a - b)
    return np.where(a == b, dv_da, D)


def commutator_functional(v: GridField, X, mu: GridDensity, spec: KernelSpec) -> float:
    """Off-diagonal integral of (v(x)-v(y)) grad_1 g(x,y) against (emp - mu)^2 in d = 1.

    The integrand is written as D(x,y) * psi(|x-y|), with D the divided
    difference of v and psi(r) = r phi'(r); psi is integrated exactly
    against cells and D is frozen at cell centres.
    """
    X = _config(X)
    N = X.size
    r = np.abs(X[:, None] - X[None, :])
    off = ~np.eye(N, dtype=bool)
    if spec.singular and np.any(r[off] == 0.0):
        raise DomainError("coincident points for a singular kernel")
    grid = mu.grid
    D = _divided_difference(v, X[:, None], X[None, :])
    pair = float(np.sum(np.where(off, D * spec.virial(np.where(off, r, 1.0)), 0.0))) / N**2
    # cross terms: int (v(x_i) - v(y)) grad_1 g(x_i, y) dmu(y)
    xc = grid.centers
    Dc = _divided_difference(v, np.repeat(X[:, None], xc.size, 1), np.broadcast_to(xc, (N, xc.size)))
    psi_cells = virial_point_integrals(spec, grid, X)
    cross = float(np.sum(Dc * psi_cells * mu.values[None, :])) / N
    # background: same cell-pair convention as the tensor-grid oracle
    from .liouville import commutator_kernel

    k = commutator_kernel(v, spec)
    back = float(mu.values @ k @ mu.values) * grid.h**2
    return pair - 2.0 * cross + back


# ---------------------------------------------------------------------------
# marginal distances
# ---------------------------------------------------------------------------

def wasserstein2_to_density(samples, ref: GridDensity) -> float:
    """Exact W2 between the empirical law of ``samples`` and a piecewise-constant density."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    M = x.size
    cdf = ref.cdf_at_edges()
    cdf = cdf / cdf[-1]
    edges = ref.grid.edges
    # breakpoints in u where either quantile function changes formula
    u = np.union1d(np.arange(M + 1) / M, cdf)
    lo, hi = u[:-1], u[1:]
    mid = 0.5 * (lo + hi)
    idx = np.minimum((mid * M).astype(int), M - 1)
    c = x[idx]
    # reference quantile is linear on each cdf segment: Q(u) = e_k + (u - F_k) / mu_k
    k = np.clip(np.searchsorted(cdf, mid, side="right") - 1, 0, ref.grid.n_cells - 1)
    dens = ref.values[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(dens > 0, 1.0 / dens, 0.0)
    q_lo = edges[k] + (lo - cdf[k]) * slope
    q_hi = edges[k] + (hi - cdf[k]) * slope
    # int over [lo, hi] of (c - q(u))^2 with q linear from q_lo to q_hi
    a, b = c - q_lo, c - q_hi
    seg = (hi - lo) * (a * a + a * b + b * b) / 3.0
    return float(np.sqrt(max(seg.sum(), 0.0)))


def wasserstein2_empirical(a, b) -> float:
    """W2 between two equal-size empirical laws in 1D (sorted coupling)."""
    a = np.sort(np.asarray(a, dtype=float).reshape(-1))
    b = np.sort(np.asarray(b, dtype=float).reshape(-1))
    if a.size != b.size:
        raise ValueError("sorted coupling needs equal sample sizes")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class MarginalDistances:
    w2: float
    tv: float
    kl: float
    n_samples: int


def _k_tuples(configs, k):
    configs = np.atleast_2d(np.asarray(configs, dtype=float))
    N = configs.shape[1]
    if k == 1:
        return configs.reshape(-1, 1)
    if N < 2:
        raise ValueError("two-point marginals need N >= 2")
    i, j = np.nonzero(~np.eye(N, dtype=bool))
    return np.stack([configs[:, i].reshape(-1), configs[:, j].reshape(-1)], axis=1)


def marginal_distances(configs, reference: GridDensity, k: int = 1, bins: int = 64, alpha: float = 0.5) -> MarginalDistances:
    """Pooled k-marginal of ``configs`` (shape (M, N)) against reference^{(x)k}.

    W2 (k = 1) is exact; TV and KL(reference || histogram) use ``bins`` bins
    per axis on the reference window, with additive smoothing ``alpha`` on
    the histogram counts.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    pts = _k_tuples(configs, k)
    n = pts.shape[0]
    if n < 100 * bins**k:
        raise InsufficientSamplesError(f"{n} samples < {100 * bins ** k} needed for {bins}^{k} bins")
    grid = reference.grid
    bin_edges = np.linspace(grid.lo, grid.hi, bins + 1)
    cdf_edges = np.interp(bin_edges, grid.edges, reference.cdf_at_edges())
    p1 = np.diff(cdf_edges)
    p = p1 if k == 1 else np.outer(p1, p1)
    counts, _ = np.histogramdd(pts, bins=[bin_edges] * k)
    outside = n - counts.sum()
    emp = counts / n
    tv = 0.5 * (np.abs(emp - p).sum() + outside / n)
    smooth = (counts + alpha) / (n + alpha * counts.size)
    pos = p > 0
    kl = float(np.sum(p[pos] * np.log(p[pos] / smooth[pos])))
    w2 = wasserstein2_to_density(pts[:, 0], reference) if k == 1 else float("nan")
    return MarginalDistances(w2, float(tv), kl, n)


def histogram_tv(a, b, lo: float, hi: float, bins: int = 64) -> float:
    """Total variation between the binned laws of two sample sets.

    Samples outside [lo, hi] are pooled into one extra bin.
    """
    edges = np.linspace(lo, hi, bins + 1)
    a, b = np.asarray(a).reshape(-1), np.asarray(b).reshape(-1)
    pa = np.histogram(a, edges)[0] / a.size
    pb = np.histogram(b, edges)[0] / b.size
    return float(0.5 * (np.abs(pa - pb).sum() + abs(pa.sum() - pb.sum())))
