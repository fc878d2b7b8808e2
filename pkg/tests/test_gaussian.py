import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnd_walk.gaussian import (
    GaussianModel,
    apply_gaussian,
    lambda_continuous,
    mu_closed_form,
    outcome_density,
    sample_outcome,
    ym_pdf,
)
from qnd_walk.hilbert import DensityMatrix, ValidationError, density_from_pure, trace_distance
from qnd_walk.povm import ObservableSpec, binned_gaussian_model, mu_matrix
from qnd_walk.verify import gaussian_checks, gaussian_mu_checks, random_state

Q = ObservableSpec([1.0, -1.0])


def test_lambda_peak_and_width():
    m = GaussianModel(Q, 0.7)
    assert lambda_continuous(m, 1.0, 0) == pytest.approx(m.norm, rel=1e-15)
    assert lambda_continuous(m, 1.7, 0) == pytest.approx(m.norm * np.exp(-0.5), rel=1e-14)
    assert m.norm == pytest.approx((np.pi * 0.49) ** -0.25)


def test_invalid_delta():
    with pytest.raises(ValidationError):
        GaussianModel(Q, 0.0)


def test_sample_eigenstate_mean():
    m = GaussianModel(Q, 1.3)
    theta = DensityMatrix(np.diag([1.0, 0.0]))
    rng = np.random.default_rng(5)
    x = np.array([sample_outcome(theta, m, rng) for _ in range(100_000)])
    assert abs(x.mean() - 1.0) <= 4 * m.outcome_std / np.sqrt(x.size)
    assert x.std() == pytest.approx(m.outcome_std, rel=0.01)


def test_sample_mixed_mean():
    m = GaussianModel(Q, 1.0)
    theta = DensityMatrix(np.diag([0.3, 0.7]))
    rng = np.random.default_rng(6)
    x = np.array([sample_outcome(theta, m, rng) for _ in range(50_000)])
    sd = np.sqrt(0.5 + 0.84)
    assert abs(x.mean() + 0.4) <= 4 * sd / np.sqrt(x.size)


def test_apply_eigenstate_unchanged():
    m = GaussianModel(Q, 0.5)
    e1 = DensityMatrix(np.diag([0.0, 1.0]))
    for p in (-3.0, 0.0, 1.0, 40.0):
        post, _ = apply_gaussian(e1, m, p)
        np.testing.assert_array_equal(post.data, e1.data)


def test_apply_plus_at_q0():
    delta = 0.8
    m = GaussianModel(Q, delta)
    post, dens = apply_gaussian(density_from_pure(np.sqrt([0.5, 0.5])), m, 1.0)
    r = np.exp(-4.0 / delta**2)
    np.testing.assert_allclose(post.diagonal, np.array([1.0, r]) / (1 + r), rtol=1e-13)
    assert dens == pytest.approx(outcome_density(density_from_pure(np.sqrt([0.5, 0.5])), m, 1.0), rel=1e-13)


def test_weak_limit():
    theta = density_from_pure(np.sqrt([0.3, 0.7]))
    post, _ = apply_gaussian(theta, GaussianModel(Q, 1e6), 0.37)
    assert trace_distance(post, theta) < 1e-10


def test_extreme_outcome_no_underflow():
    m = GaussianModel(Q, 0.05)
    theta = DensityMatrix(np.diag([0.5, 0.5]))
    post, dens = apply_gaussian(theta, m, 30.0)
    assert dens == 0.0  # the density itself underflows
    np.testing.assert_allclose(post.diagonal, [1.0, 0.0], atol=1e-300)


def test_mu_closed_form_matches_binned():
    m = GaussianModel(Q, 2.0)
    assert mu_closed_form(m)[0, 1] == pytest.approx(np.exp(-0.25))
    b = binned_gaussian_model(2.0, Q, 4096, (-11.0, 11.0))
    assert abs(mu_matrix(b).basis[0, 1] - np.exp(-0.25)) < 1e-6


def test_ym_pdf_examples():
    m = GaussianModel(Q, 4.0)
    theta = DensityMatrix(np.diag([0.3, 0.7]))
    ens = ym_pdf("ensemble", 500, theta, m)
    assert len(ens.components) == 1
    assert ens.components[0].center == pytest.approx(-0.4)
    assert ens.components[0].variance == pytest.approx(16 / 1000)
    rep = ym_pdf("repeated", 500, theta, m)
    assert [(c.weight, c.center) for c in rep.components] == [(pytest.approx(0.3), 1.0), (pytest.approx(0.7), -1.0)]
    assert rep.mean == pytest.approx(-0.4)
    exact = ym_pdf("ensemble", 500, theta, m, exact_variance=True)
    assert exact.components[0].variance == pytest.approx((8 + 0.84) / 500)


def test_ym_std_halves():
    m = GaussianModel(Q, 4.0)
    for kind in ("ensemble", "repeated"):
        a = ym_pdf(kind, 100, [0.3, 0.7], m).components[0].std
        b = ym_pdf(kind, 400, [0.3, 0.7], m).components[0].std
        assert b == pytest.approx(a / 2)


def test_ym_pdf_normalized():
    m = GaussianModel(Q, 1.0)
    y = np.linspace(-3, 3, 20001)
    for kind in ("ensemble", "repeated"):
        f = ym_pdf(kind, 50, [0.3, 0.7], m).pdf(y)
        assert np.trapezoid(f, y) == pytest.approx(1.0, abs=1e-8)


def test_quadrature_suite_three_level():
    m = GaussianModel(ObservableSpec([1.0, 1.0, -0.5]), 0.6)
    rng = np.random.default_rng(3)
    checks = gaussian_checks(m, random_state(rng, 3)) + gaussian_mu_checks(m)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


@given(st.floats(0.2, 5.0), st.floats(-20, 20), st.integers(0, 2**32 - 1))
def test_apply_gaussian_keeps_trace(delta, p, seed):
    theta = random_state(np.random.default_rng(seed), 2)
    post, dens = apply_gaussian(theta, GaussianModel(Q, delta), p)
    assert abs(np.trace(post.data) - 1) <= 1e-12
    assert dens >= 0
