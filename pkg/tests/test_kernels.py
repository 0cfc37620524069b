import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaoslab.errors import DomainError, UnsupportedKernelError
from chaoslab.kernels import (
    ConfinementSpec,
    KernelSpec,
    confinement_eval,
    confinement_grad,
    confinement_hess,
    growth_bound_holds,
    kernel_eval,
    kernel_grad,
    kernel_second_derivative,
)

FAMILIES = [KernelSpec.log(), KernelSpec.riesz(0.5), KernelSpec.riesz(0.2), KernelSpec.smooth("gaussian"),
            KernelSpec.smooth("cosine", 0.5, 2.0), KernelSpec.log(2), KernelSpec.riesz(1.5, 3)]


def test_point_values():
    assert kernel_eval(KernelSpec.log(), 0.3, 1.3) == pytest.approx(0.0, abs=1e-15)
    assert kernel_eval(KernelSpec.riesz(0.5), 0.0, 1.0) == pytest.approx(2.0)
    assert kernel_eval(KernelSpec.log(), 0.7, 0.7) == np.inf
    assert kernel_eval(KernelSpec.riesz(0.5), 0.7, 0.7) == np.inf
    assert np.isfinite(kernel_eval(KernelSpec.smooth("gaussian"), 0.7, 0.7))


def test_gradients():
    assert kernel_grad(KernelSpec.log(), 2.0, 0.0) == pytest.approx(-0.5)
    assert kernel_grad(KernelSpec.riesz(0.5), 1.0, 0.0) == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        kernel_grad(KernelSpec.log(), 1.0, 1.0)


def test_second_derivative():
    assert kernel_second_derivative(KernelSpec.log(), 1.0) == pytest.approx(1.0)
    assert kernel_second_derivative(KernelSpec.log(), 2.0) == pytest.approx(0.25)
    assert kernel_second_derivative(KernelSpec.riesz(0.5), 1.0) == pytest.approx(0.75)
    with pytest.raises(DomainError):
        kernel_second_derivative(KernelSpec.log(), 0.0)
    r = np.logspace(-3, 3, 200)
    assert np.all(kernel_second_derivative(KernelSpec.riesz(0.7), r) > 0)


def test_invalid_specs():
    with pytest.raises(ValueError):
        KernelSpec.riesz(1.5, 1)
    with pytest.raises(ValueError):
        KernelSpec.riesz(0.0, 1)
    with pytest.raises(ValueError):
        KernelSpec.smooth("triangle")
    with pytest.raises(UnsupportedKernelError):
        KernelSpec.riesz(1.2, 2).antiderivative(np.array([0.5]))


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: f"{s.family}-{s.s}-{s.d}-{s.table}")
def test_symmetry_on_random_pairs(spec, rng):
    shape = (10_000,) if spec.d == 1 else (10_000, spec.d)
    x, y = rng.normal(size=shape), rng.normal(size=shape)
    assert np.array_equal(kernel_eval(spec, x, y), kernel_eval(spec, y, x))


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: f"{s.family}-{s.s}-{s.d}-{s.table}")
def test_gradient_matches_central_difference(spec, rng):
    r = np.logspace(-2, 2, 60)
    for d in range(spec.d):
        u = rng.normal(size=(r.size, spec.d)) if spec.d > 1 else np.ones((r.size, 1))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        x = (r[:, None] * u).squeeze(-1) if spec.d == 1 else r[:, None] * u
        y = np.zeros_like(x)
        grad = kernel_grad(spec, x, y)
        e = np.zeros(spec.d)
        e[d] = 1.0
        step = 1e-6 * r if spec.d == 1 else (1e-6 * r)[:, None] * e
        num = (kernel_eval(spec, x + step, y) - kernel_eval(spec, x - step, y)) / (2e-6 * r)
        g = grad if spec.d == 1 else grad[:, d]
        assert np.all(np.abs(g - num) <= 1e-6 * (1 + np.abs(g)))


@given(st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=200, deadline=None)
def test_gradient_antisymmetry(x, y):
    if x == y:
        return
    for spec in (KernelSpec.log(), KernelSpec.riesz(0.5), KernelSpec.smooth("gaussian")):
        assert kernel_grad(spec, x, y) == -kernel_grad(spec, y, x)


@given(st.floats(1e-8, 1e8))
@settings(max_examples=200, deadline=None)
def test_growth_bound_with_c_two(r):
    assert growth_bound_holds(KernelSpec.log(), np.array([r]))
    assert growth_bound_holds(KernelSpec.riesz(0.5), np.array([r]))


def test_antiderivatives_are_consistent():
    for spec in (KernelSpec.log(), KernelSpec.riesz(0.3), KernelSpec.smooth("gaussian", 1.3, 0.7)):
        u = np.linspace(0.05, 3.0, 50)
        eps = 1e-6
        dA = (spec.antiderivative(u + eps) - spec.antiderivative(u - eps)) / (2 * eps)
        dB = (spec.antiderivative2(u + eps) - spec.antiderivative2(u - eps)) / (2 * eps)
        np.testing.assert_allclose(dA, spec.phi(u), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(dB, spec.antiderivative(u), rtol=1e-6, atol=1e-8)


def test_confinements():
    V = ConfinementSpec.quadratic(2.0)
    assert confinement_eval(V, 1.0) == pytest.approx(1.0)
    assert confinement_grad(V, 1.0) == pytest.approx(2.0)
    assert confinement_hess(V, 1.0) == pytest.approx(2.0)
    assert confinement_grad(V, 0.0) == 0.0
    assert np.min(confinement_hess(V, np.linspace(-5, 5, 101))) == 2.0
    Q = ConfinementSpec("quartic", a=1.0, b=0.0)
    assert confinement_eval(Q, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ConfinementSpec.quadratic(0.0)


def test_table_confinement_reproduces_quadratic():
    nodes = np.linspace(-4, 4, 41)
    T = ConfinementSpec("table", nodes=tuple(nodes), values=tuple(nodes**2))
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(confinement_eval(T, x), x**2, atol=1e-10)
    np.testing.assert_allclose(confinement_grad(T, x), 2 * x, atol=1e-8)
