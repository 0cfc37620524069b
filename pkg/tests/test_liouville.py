import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaoslab.diagnostics import TheoryConstants, error_terms
from chaoslab.equilibrium import convexity_constant, solve_thermal_equilibrium
from chaoslab.errors import CFLError, InvalidLSIError, MemoryBudgetError, SupportError
from chaoslab.experiments import run_coupled, split_mixture
from chaoslab.grid import Grid1D, GridDensity, GridField
from chaoslab.kernels import ConfinementSpec, KernelSpec
from chaoslab.liouville import (
    JointDensity,
    LiouvilleSolver,
    build_joint,
    dissipation_audit,
    gronwall_audit,
    liouville_step,
    log_partition_exact,
    mean_commutator,
    modulated_fisher,
    modulated_free_energy,
    product_values,
    relative_entropy,
    symmetry_defect,
)
from chaoslab.meanfield import initial_state, mf_step

LOG = KernelSpec.log()
ZERO = KernelSpec.zero()
V2 = ConfinementSpec.quadratic(2.0)
GRID = Grid1D(-6, 6, 64)


def gauss(grid, m, s):
    return GridDensity.from_function(grid, lambda x: np.exp(-((x - m) ** 2) / (2 * s * s)))


def random_mixture(rng, grid=GRID, n_comp=3):
    comps = []
    for _ in range(n_comp):
        m, s = rng.uniform(-1.5, 1.5, 2), rng.uniform(0.3, 1.0, 2)
        comps.append((gauss(grid, m[0], s[0]), gauss(grid, m[1], s[1])))
    return build_joint("custom_mixture", LOG, grid, 2, components=comps, weights=rng.uniform(0.2, 1.0, n_comp))


@pytest.fixture(scope="module")
def eq64():
    return solve_thermal_equilibrium(LOG, V2, 1.0, GRID, tol=1e-13).mu_beta


def test_joint_density_validation():
    with pytest.raises(ValueError):
        JointDensity(GRID, 4, np.ones((2, 2, 2, 2)))
    with pytest.raises(ValueError):
        JointDensity.from_values(GRID, np.ones((64, 32)))
    vals = np.random.default_rng(0).random((64, 64))
    with pytest.raises(ValueError):
        JointDensity.from_values(GRID, vals, symmetric=True)
    f = JointDensity.from_values(GRID, vals, symmetric=False)
    assert f.marginal(1).sum() * GRID.h == pytest.approx(1.0)
    with pytest.raises(MemoryBudgetError):
        build_joint("product", LOG, Grid1D(0, 1, 1024), 3, mu=GridDensity.from_values(Grid1D(0, 1, 1024), np.ones(1024)))


def test_product_equals_modulated_gibbs_without_interaction():
    mu = gauss(GRID, 0.3, 0.8)
    a = build_joint("product", ZERO, GRID, 2, mu=mu)
    b = build_joint("modulated_gibbs", ZERO, GRID, 2, mu=mu, beta=1.7)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("N", [2, 3])
def test_gibbs_is_modulated_gibbs_of_equilibrium(N):
    grid = Grid1D(-6, 6, 48)
    eq = solve_thermal_equilibrium(LOG, V2, 1.0, grid, tol=1e-13).mu_beta
    q = build_joint("modulated_gibbs", LOG, grid, N, mu=eq, beta=1.0).values
    p = build_joint("gibbs", LOG, grid, N, beta=1.0, V=V2).values
    live = p > 1e-250
    assert np.max(np.abs(q[live] / p[live] - 1)) < 1e-6


def test_mixture_marginals():
    a, b = gauss(GRID, -1, 0.5), gauss(GRID, 1.2, 0.7)
    f = build_joint("custom_mixture", ZERO, GRID, 2, components=[(a, b)])
    np.testing.assert_allclose(f.marginal(1), 0.5 * (a.values + b.values), atol=1e-14)
    with pytest.raises(ValueError):
        build_joint("custom_mixture", ZERO, GRID, 2, components=[(a,)])
    with pytest.raises(ValueError):
        build_joint("tensor", ZERO, GRID, 2, mu=a)


def test_relative_entropy_examples(rng):
    f = random_mixture(rng)
    assert relative_entropy(f, f) == pytest.approx(0.0, abs=1e-15)
    grid = Grid1D(-10, 10, 400)
    m1, s1, m2, s2 = 0.4, 0.7, -0.2, 1.3
    kl1 = np.log(s2 / s1) + (s1**2 + (m1 - m2) ** 2) / (2 * s2**2) - 0.5
    p = build_joint("product", ZERO, grid, 2, mu=gauss(grid, m1, s1))
    q = build_joint("product", ZERO, grid, 2, mu=gauss(grid, m2, s2))
    # cell sampling of the gaussians costs O(h^2) against the continuum value
    assert relative_entropy(p, q) == pytest.approx(kl1, rel=1e-3)
    # the tensor sum reduces to the 1D sum of the discretised marginals
    pv, qv = gauss(grid, m1, s1).values, gauss(grid, m2, s2).values
    assert relative_entropy(p, q) == pytest.approx(np.sum(pv * np.log(pv / qv)) * grid.h, abs=1e-6)


def test_relative_entropy_support_error():
    a, b = gauss(GRID, 0, 0.5), gauss(GRID, 0, 0.5)
    vals = b.values.copy()
    vals[30:34] = 0.0
    q = build_joint("product", ZERO, GRID, 2, mu=GridDensity.from_values(GRID, vals))
    with pytest.raises(SupportError):
        relative_entropy(build_joint("product", ZERO, GRID, 2, mu=a), q)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_relative_entropy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    assert relative_entropy(random_mixture(rng), random_mixture(rng)) >= 0.0


def test_free_energy_of_uniform_product(unit_uniform):
    f = build_joint("product", LOG, unit_uniform.grid, 2, mu=unit_uniform)
    mfe = modulated_free_energy(f, unit_uniform, LOG, 1.0)
    assert mfe.h_rel == pytest.approx(0.0, abs=1e-14)
    assert mfe.e_n == pytest.approx(-0.375, abs=1e-10)


def test_zero_kernel_free_energy_is_entropy(rng):
    f = random_mixture(rng)
    mu = gauss(GRID, 0, 1)
    mfe = modulated_free_energy(f, mu, ZERO, 2.0)
    assert mfe.mean_F == 0.0
    assert mfe.e_n == mfe.h_rel / 2.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), beta=st.floats(0.2, 3.0))
def test_rewriting_identity(seed, beta):
    rng = np.random.default_rng(seed)
    f = random_mixture(rng)
    mu = gauss(GRID, rng.uniform(-1, 1), rng.uniform(0.4, 1.5))
    Q = build_joint("modulated_gibbs", LOG, GRID, 2, mu=mu, beta=beta)
    e = modulated_free_energy(f, mu, LOG, beta).e_n
    rhs = (relative_entropy(f, Q) - log_partition_exact(mu, LOG, beta, 2) / 2) / beta
    assert abs(e - rhs) < 1e-6


def test_fisher_vanishes_at_reference(rng):
    mu = gauss(GRID, 0.2, 0.9)
    Q = build_joint("modulated_gibbs", LOG, GRID, 2, mu=mu, beta=1.0)
    assert modulated_fisher(Q, mu, LOG, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_gaussian_fisher():
    grid = Grid1D(-10, 10, 512)
    m1, s1, m2, s2 = 0.5, 0.8, 0.0, 1.2
    f = build_joint("product", ZERO, grid, 2, mu=gauss(grid, m1, s1))
    mu = gauss(grid, m2, s2)
    exact = 0.25 * ((1 / s2**2 - 1 / s1**2) ** 2 * s1**2 + ((m1 - m2) / s2**2) ** 2)
    assert modulated_fisher(f, mu, ZERO, 1.0) == pytest.approx(exact, rel=1e-3)


def test_lsi_at_equilibrium(eq64, rng):
    est = convexity_constant(eq64, eq64, V2, LOG, 1.0)
    Q = build_joint("modulated_gibbs", LOG, GRID, 2, mu=eq64, beta=1.0)
    for _ in range(10):
        f = random_mixture(rng)
        assert modulated_fisher(f, eq64, LOG, 1.0, Q=Q) >= relative_entropy(f, Q) / est.c_ls


def test_assumption_ii_with_calibrated_error(eq64, rng):
    o = error_terms(2, eq64, LOG, TheoryConstants()).o_n
    c_beta = 0.99
    for _ in range(50):
        mfe = modulated_free_energy(random_mixture(rng), eq64, LOG, 1.0)
        assert mfe.mean_F >= -c_beta * mfe.h_rel - o


def test_gibbs_is_stationary():
    grid = Grid1D(-6, 6, 48)
    p = build_joint("gibbs", LOG, grid, 2, beta=1.0, V=V2)
    q = liouville_step(p, LOG, V2, 1.0, 0.01)
    assert np.max(np.abs(q.values - p.values)) < 10 * 0.01 * grid.h**2 * 1e-6


def test_zero_kernel_product_structure():
    mu0 = gauss(GRID, 1.0, 0.6)
    f = build_joint("product", ZERO, GRID, 2, mu=mu0)
    state = initial_state(mu0, ZERO, V2, 1.0)
    solver = LiouvilleSolver(ZERO, V2, 1.0, GRID, 2, 0.01)
    for _ in range(10):
        f = solver.step(f)
        state = mf_step(state, ZERO, V2, 1.0, 0.01)
    assert np.max(np.abs(f.values - product_values(state.mu, 2))) < 1e-6
    assert np.max(np.abs(f.marginal(1) - state.mu.values)) < 1e-6


def test_symmetry_and_mass_preserved(rng):
    grid = Grid1D(-5, 5, 24)
    comps = [(gauss(grid, -1, 0.5), gauss(grid, 1, 0.4), gauss(grid, 0, 1.0))]
    f = build_joint("custom_mixture", LOG, grid, 3, components=comps)
    solver = LiouvilleSolver(LOG, V2, 1.0, grid, 3, 0.01)
    for _ in range(1000):
        f = solver.step(f)
    assert symmetry_defect(f.values) < 1e-12
    assert f.values.sum() * grid.h**3 == pytest.approx(1.0, abs=1e-10)
    assert np.all(f.values >= 0)


def test_explicit_mode_cfl():
    with pytest.raises(CFLError):
        LiouvilleSolver(LOG, V2, 1.0, GRID, 2, 1.0, mode="explicit")
    with pytest.raises(ValueError):
        LiouvilleSolver(LOG, V2, 1.0, GRID, 2, 0.01, mode="rk2")


def test_commutator_vanishes_on_product_of_zero_kernel():
    mu = gauss(GRID, 0, 1)
    f = build_joint("product", ZERO, GRID, 2, mu=mu)
    assert mean_commutator(f, mu, GridField(GRID, GRID.centers**3), ZERO) == 0.0


def test_equilibrium_start_audits(eq64):
    Q = build_joint("modulated_gibbs", LOG, GRID, 2, mu=eq64, beta=1.0)
    run = run_coupled(Q, eq64, LOG, V2, 1.0, 0.02, 0.2, mu_beta=eq64)
    for r in run.records:
        assert abs(r.fisher) < 1e-10 and abs(r.h_rel_q) < 1e-10 and abs(r.commutator) < 1e-8
    rep = dissipation_audit(run.records, 1.0, tol_disc=1e-9)
    assert rep.passed and abs(rep.lhs).max() < 1e-8


def test_zero_kernel_dissipation_identity():
    # the residual is dominated by the centred differences inside the Fisher information
    grid = Grid1D(-7, 7, 192)
    mu0 = gauss(grid, 0.0, 1.1)
    f0 = build_joint("product", ZERO, grid, 2, mu=gauss(grid, 0.8, 0.7))
    run = run_coupled(f0, mu0, ZERO, ConfinementSpec.quadratic(1.0), 1.0, 1e-3, 0.1, record_every=10)
    rep = dissipation_audit(run.records, 1.0)
    assert np.all(run.column("commutator") == 0.0)
    k = len(run.records) // 2
    assert rep.lhs[k] == pytest.approx(rep.exact_rhs[k], rel=1e-3)
    assert rep.passed


def test_zero_kernel_entropy_decay_rate():
    grid = Grid1D(-6, 6, 64)
    P = build_joint("gibbs", ZERO, grid, 2, beta=1.0, V=V2)
    f = build_joint("custom_mixture", ZERO, grid, 2, components=[(gauss(grid, -1, 0.4), gauss(grid, 1, 0.4))])
    solver = LiouvilleSolver(ZERO, V2, 1.0, grid, 2, 0.01)
    t, h = [], []
    for k in range(301):
        if k % 10 == 0:
            t.append(k * 0.01)
            h.append(relative_entropy(f, P))
        f = solver.step(f)
    from chaoslab.liouville import fit_decay_rate

    assert fit_decay_rate(t, h) >= 0.9


def test_chaos_generation_from_mixture():
    grid = Grid1D(-12, 12, 128)
    spec, beta = LOG, 0.1
    eq = solve_thermal_equilibrium(spec, V2, beta, grid, tol=1e-12).mu_beta
    f0 = split_mixture(eq)
    run = run_coupled(f0, eq, spec, V2, beta, 0.05, 10.0, record_every=20, mu_beta=eq)
    kappas = run.column("kappa")
    report = gronwall_audit(run.records, beta, 2.0 / (beta * kappas.min()), 1.0, 2, kappas=kappas)
    assert report.violations == 0 and report.lsi_violations == 0
    assert run.records[-1].h_rel < 0.01 * run.records[0].h_rel


def test_gronwall_rejects_invalid_certificate(eq64):
    Q = build_joint("modulated_gibbs", LOG, GRID, 2, mu=eq64, beta=1.0)
    run = run_coupled(Q, eq64, LOG, V2, 1.0, 0.05, 0.1, mu_beta=eq64)
    with pytest.raises(InvalidLSIError):
        gronwall_audit(run.records, 1.0, 1.0, 1.0, 2, kappas=[1.0, -0.5, 1.0])
