import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from chaoslab.diagnostics import (
    TheoryConstants,
    calibrate_c_riesz,
    commutator_functional,
    error_terms,
    exponential_moment_check,
    histogram_tv,
    jensen_lower_bound,
    log_mean_exp,
    log_partition_estimate,
    marginal_distances,
    modulated_energy,
    modulated_energy_batch,
    riesz_lower_bound,
    riesz_upper_bound,
    unrenormalized_energy,
    wasserstein2_empirical,
    wasserstein2_to_density,
)
from chaoslab.errors import DomainError, EstimatorError, InsufficientSamplesError
from chaoslab.grid import Grid1D, GridDensity, GridField
from chaoslab.kernels import KernelSpec

LOG = KernelSpec.log()
GAUSS = KernelSpec.smooth("gaussian")


def log_potential_uniform(x):
    """-int_0^1 log|x - y| dy by adaptive quadrature."""
    pts = [x] if 0 < x < 1 else None
    return -quad(lambda y: np.log(abs(x - y)), 0, 1, points=pts, limit=200)[0]


def test_single_point_example(unit_uniform):
    F = modulated_energy([0.5], unit_uniform, LOG)
    assert F.pair_sum == 0.0
    assert F.cross == pytest.approx(1 + np.log(2), abs=1e-12)
    assert F.total == pytest.approx(-0.25 - np.log(2), abs=1e-12)
    assert F.total == pytest.approx(-0.9431, abs=5e-5)


def test_two_point_example_against_quadrature(unit_uniform):
    X = np.array([0.25, 0.75])
    oracle = -np.log(0.5) / 4 - np.mean([log_potential_uniform(x) for x in X]) + 0.75
    assert modulated_energy(X, unit_uniform, LOG).total == pytest.approx(oracle, abs=1e-6)


@pytest.mark.parametrize("N", [1, 3, 10])
def test_constant_kernel(N, rng, unit_uniform):
    c = 2.5
    spec = KernelSpec.smooth("constant", amplitude=c)
    X = rng.uniform(-0.5, 1.5, N)
    assert modulated_energy(X, unit_uniform, spec).total == pytest.approx(-c / (2 * N), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 12))
def test_breakdown_identity(seed, N):
    grid = Grid1D(-3, 3, 64)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2))
    X = np.random.default_rng(seed).normal(0, 1, N)
    F = modulated_energy(X, mu, LOG)
    assert abs(F.total - (F.pair_sum - F.cross + F.background)) < 1e-13
    assert modulated_energy_batch(X[None], mu, LOG)[0] == pytest.approx(F.total, abs=1e-12)


def test_coincident_points_rejected(unit_uniform):
    with pytest.raises(DomainError):
        modulated_energy([0.3, 0.3], unit_uniform, LOG)
    with pytest.raises(DomainError):
        commutator_functional(GridField(unit_uniform.grid, unit_uniform.grid.centers), [0.3, 0.3], unit_uniform, LOG)


def test_unrenormalized_energy(rng):
    grid = Grid1D(-4, 4, 256)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2 / 2))
    for _ in range(20):
        X = rng.normal(0, 1.5, rng.integers(1, 20))
        full = unrenormalized_energy(X, mu, GAUSS)
        assert full >= -1e-12
        assert full == pytest.approx(modulated_energy(X, mu, GAUSS).total + GAUSS.phi(0.0) / (2 * X.size))
    with pytest.raises(DomainError):
        unrenormalized_energy([0.0, 1.0], mu, LOG)


def test_unrenormalized_energy_vanishes_for_iid_samples(rng):
    grid = Grid1D(-4, 4, 256)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2 / 2))
    means = [np.mean([unrenormalized_energy(mu.sample(rng, N), mu, GAUSS) for _ in range(40)]) for N in (4, 16, 64, 256)]
    assert np.all(np.diff(means) < 0)
    assert means[-1] < 0.05 * means[0]


def test_modulated_energy_shrinks_for_iid_samples(rng, unit_uniform):
    # E F_N = -(1/2N) iint g dmu dmu for iid points, so the mean halves with N
    means = []
    for N in (8, 16, 32, 64):
        X = unit_uniform.sample(rng, (400, N))
        means.append(modulated_energy_batch(X, unit_uniform, LOG).mean())
    assert np.all(np.diff(np.abs(means)) < 0)
    assert means[-1] == pytest.approx(-0.75 / 64, rel=0.2)


def test_riesz_lower_bound_example():
    assert riesz_lower_bound(100, 1.0, LOG, TheoryConstants()) == pytest.approx(-(np.log(100) / 200 + 0.01), abs=1e-14)
    assert riesz_lower_bound(100, 1.0, LOG, TheoryConstants()) == pytest.approx(-0.03303, abs=5e-6)
    vals = [abs(riesz_lower_bound(N, 1.0, LOG, TheoryConstants())) for N in (10, 10**3, 10**5, 10**7)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-5
    riesz = KernelSpec.riesz(0.5)
    assert abs(riesz_lower_bound(10**8, 1.0, riesz, TheoryConstants())) < 1e-3


def test_error_terms_modes(unit_uniform):
    assert error_terms(100, 1.0, LOG, TheoryConstants()).o_n == pytest.approx(0.03303, abs=5e-6)
    assert error_terms(100, 1.0, LOG, TheoryConstants()).mode == "log"
    assert error_terms(1, 0.5, LOG, TheoryConstants()).o_n >= 0.0
    with pytest.raises(DomainError):
        error_terms(10, unit_uniform, GAUSS, TheoryConstants())


def test_calibrated_floor_holds(rng, unit_uniform):
    N = 8
    F = modulated_energy_batch(unit_uniform.sample(rng, (2000, N)), unit_uniform, LOG)
    c = calibrate_c_riesz(F, N, 1.0, LOG)
    assert np.all(F >= riesz_lower_bound(N, 1.0, LOG, TheoryConstants(c_riesz=c)))


def test_constants_validation():
    with pytest.raises(ValueError):
        TheoryConstants(c_riesz=0.0).validate()
    with pytest.raises(ValueError):
        TheoryConstants(c_beta_assm=1.0).validate(beta=1.0)
    TheoryConstants(c_beta_assm=0.5).validate(beta=1.0)


def test_log_mean_exp():
    res = log_mean_exp(np.log([1.0, 2.0, 3.0, 6.0]))
    assert res.estimate == pytest.approx(np.log(3.0))
    assert res.std_error > 0 and 1 <= res.ess <= 4
    with pytest.raises(InsufficientSamplesError):
        log_mean_exp([0.0])


def test_log_partition_zero_kernel(unit_uniform, rng):
    assert log_partition_estimate(unit_uniform, KernelSpec.zero(), 1.0, 4, 100, rng) == (0.0, 0.0)


def test_log_partition_bounds(unit_uniform, rng):
    N, beta = 4, 1.0
    est, se = log_partition_estimate(unit_uniform, LOG, beta, N, 20000, rng)
    floor = jensen_lower_bound(unit_uniform, LOG, beta)
    assert floor == pytest.approx(0.75, abs=1e-12)
    assert est >= floor - 3 * se
    assert est <= riesz_upper_bound(N, 1.0, LOG, TheoryConstants(), beta) + 3 * se


def test_log_partition_errors(unit_uniform, rng):
    with pytest.raises(ValueError):
        log_partition_estimate(unit_uniform, LOG, 1.0, 17, 100, rng)
    with pytest.raises(EstimatorError):
        log_partition_estimate(unit_uniform, LOG, 200.0, 8, 200, rng)


def test_exponential_moment_zero_kernel(unit_uniform, rng):
    X = unit_uniform.sample(rng, (500, 4))
    chk = exponential_moment_check(unit_uniform, KernelSpec.zero(), 1.0, 4, X, 100, rng)
    assert chk.lhs == pytest.approx(0.0, abs=1e-15) and chk.rhs == 0.0


def test_commutator_constant_field(unit_uniform, rng):
    v = GridField(unit_uniform.grid, np.full(unit_uniform.grid.n_cells, 3.0))
    assert commutator_functional(v, rng.uniform(0, 1, 7), unit_uniform, LOG) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("N", [2, 5])
def test_commutator_linear_field(N, rng, unit_uniform):
    # (x - y) grad_1 g = -1 off the diagonal, so the functional is -(1 - 1/N - 2 + 1) = 1/N
    v = GridField(unit_uniform.grid, unit_uniform.grid.centers)
    X = np.sort(rng.uniform(0.05, 0.95, N))
    assert commutator_functional(v, X, unit_uniform, LOG) == pytest.approx(1.0 / N, abs=1e-9)


def test_commutator_bound_calibration(rng):
    grid = Grid1D(-4, 4, 256)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2 / 2))
    v = GridField(grid, np.sin(grid.centers))
    N = 16
    o = error_terms(N, mu, LOG, TheoryConstants()).o_n
    ratios = []
    for _ in range(200):
        X = np.sort(mu.sample(rng, N))
        F = modulated_energy(X, mu, LOG).total
        ratios.append(abs(commutator_functional(v, X, mu, LOG)) / (F + o))
    c_me = max(ratios)
    assert np.isfinite(c_me) and c_me > 0


def test_w2_point_masses():
    assert wasserstein2_empirical(np.zeros(10), np.full(10, 0.7)) == pytest.approx(0.7)
    grid = Grid1D(0, 1, 64)
    mu = GridDensity.from_values(grid, np.ones(64))
    # point mass at 0 against uniform[0,1]: sqrt(1/3)
    assert wasserstein2_to_density(np.zeros(5), mu) == pytest.approx(np.sqrt(1 / 3), rel=1e-12)
    with pytest.raises(ValueError):
        wasserstein2_empirical(np.zeros(3), np.zeros(4))


def test_w2_to_density_matches_quantile_quadrature(rng):
    grid = Grid1D(-3, 3, 128)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2))
    x = rng.normal(0.3, 0.8, 500)
    u = (np.arange(200000) + 0.5) / 200000
    cdf = mu.cdf_at_edges() / mu.cdf_at_edges()[-1]
    q_ref = np.interp(u, cdf, grid.edges)
    q_emp = np.sort(x)[np.minimum((u * 500).astype(int), 499)]
    assert wasserstein2_to_density(x, mu) == pytest.approx(np.sqrt(np.mean((q_emp - q_ref) ** 2)), rel=1e-4)


def test_marginal_distances_self(rng):
    grid = Grid1D(-4, 4, 256)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2 / 2))
    X = mu.sample(rng, (100, 100))
    md = marginal_distances(X, mu)
    # E TV ~ sum sqrt(p(1-p)/n) / 2 over bins
    assert md.tv < 3 * 0.5 * np.sqrt(64 / X.size) + 0.01
    assert md.kl >= 0 and md.w2 < 0.05
    md2 = marginal_distances(mu.sample(rng, (4200, 100)), mu, k=2, bins=8)
    assert md2.tv < 0.05 and np.isnan(md2.w2)


def test_marginal_distances_errors(rng):
    grid = Grid1D(-4, 4, 64)
    mu = GridDensity.from_function(grid, lambda x: np.exp(-x**2 / 2))
    with pytest.raises(InsufficientSamplesError):
        marginal_distances(mu.sample(rng, (10, 10)), mu)
    with pytest.raises(ValueError):
        marginal_distances(mu.sample(rng, (100, 100)), mu, k=3)
    with pytest.raises(ValueError):
        marginal_distances(mu.sample(rng, (10000, 1)), mu, k=2, bins=2)


def test_histogram_tv():
    a = np.linspace(0, 1, 1000)
    assert histogram_tv(a, a, 0, 1) == 0.0
    assert histogram_tv(a, a + 2, 0, 1) == pytest.approx(1.0)


def test_modulated_gibbs_marginal_approaches_mu():
    from chaoslab.equilibrium import solve_thermal_equilibrium
    from chaoslab.kernels import ConfinementSpec
    from chaoslab.particles import mala_sample, replica_rng

    V = ConfinementSpec.quadratic(2.0)
    eq = solve_thermal_equilibrium(LOG, V, 1.0, Grid1D(-6, 6, 256), tol=1e-12).mu_beta
    tvs = []
    for N, dt in ((4, 0.1), (16, 0.025)):  # the stiffness of close pairs grows with N
        rngs = [replica_rng(100 + N, k) for k in range(100)]
        res = mala_sample("modulated", LOG, 1.0, N, 800, dt, rngs, mu=eq, n_chains=100, burn_in=200, thin=4)
        tvs.append(marginal_distances(res.flat(), eq).tv)
        F = modulated_energy_batch(res.flat(), eq, LOG)
        assert np.all(F >= riesz_lower_bound(N, eq.sup_norm, LOG, TheoryConstants()))
        c = calibrate_c_riesz(F, N, eq.sup_norm, LOG)
        assert np.all(F >= riesz_lower_bound(N, eq.sup_norm, LOG, TheoryConstants(c_riesz=c)))
    assert tvs[1] < tvs[0]
