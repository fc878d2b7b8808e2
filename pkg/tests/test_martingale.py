import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnd_walk.fixtures import degenerate_model, qubit_model, qubit_state
from qnd_walk.hilbert import DensityMatrix, density_from_pure
from qnd_walk.martingale import (
    asymptotic_fixed_point_check,
    decay_curve,
    density_martingale_gap,
    exact_onestep_diag,
    exact_onestep_offdiag,
    martingale_reports,
    offdiag_residual,
    purity_submartingale_check,
    unconditional_class_expectation,
)
from qnd_walk.povm import DiscreteModel, ObservableSpec
from qnd_walk.trajectory import TrajectoryConfig, run_ensemble
from qnd_walk.verify import random_model, random_state

PLUS = density_from_pure(np.sqrt([0.5, 0.5]))


def test_diag_martingale_hand_example():
    res = exact_onestep_diag(DensityMatrix(np.diag([0.3, 0.7])), qubit_model())
    np.testing.assert_allclose(res, 0.0, atol=1e-15)


def test_diag_martingale_eigenstate():
    np.testing.assert_allclose(exact_onestep_diag(DensityMatrix(np.diag([0.0, 1.0])), qubit_model()), 0.0, atol=1e-15)


def test_offdiag_factor_plus_state():
    (f,) = exact_onestep_offdiag(PLUS, qubit_model())
    assert f.measured * 0.5 == pytest.approx(0.4, abs=1e-15)
    assert f.mu == pytest.approx(0.8)
    assert f.kind == "supermartingale"


def test_offdiag_factor_degenerate_pair():
    theta = random_state(np.random.default_rng(1), 3)
    f01 = [f for f in exact_onestep_offdiag(theta, degenerate_model()) if (f.i, f.j) == (0, 1)][0]
    assert f01.measured == pytest.approx(1.0, abs=1e-12)
    assert f01.kind == "martingale"


def test_full_state_not_martingale():
    assert density_martingale_gap(qubit_state(), qubit_model()) > 1e-9
    assert density_martingale_gap(DensityMatrix(np.diag([0.3, 0.7])), qubit_model()) <= 1e-15


def test_nielsen_examples():
    assert purity_submartingale_check(PLUS, qubit_model(), 2) == pytest.approx(0.0, abs=1e-15)
    assert purity_submartingale_check(DensityMatrix(np.eye(2) / 2), qubit_model(), 2) > 0
    theta = random_state(np.random.default_rng(2), 3, rank=3)
    for m in (2, 3):
        assert purity_submartingale_check(theta, degenerate_model(), m) >= -1e-12


def test_nielsen_rejects_m1():
    with pytest.raises(ValueError):
        purity_submartingale_check(PLUS, qubit_model(), 1)


def test_unconditional_expectation_chained():
    theta = random_state(np.random.default_rng(3), 3)
    m = degenerate_model()
    for n in (1, 4, 8):
        np.testing.assert_allclose(
            unconditional_class_expectation(m, theta, n),
            [theta.diagonal[:2].sum(), theta.diagonal[2]],
            atol=1e-12,
        )


def test_decay_curve_eigenstate_zero():
    cfg = TrajectoryConfig(qubit_model(), DensityMatrix(np.diag([1.0, 0.0])), 10, seed=1, record_offdiag=True)
    c = decay_curve(run_ensemble(cfg, 20), (0, 1))
    assert np.all(c.mean == 0.0)
    assert c.passed()
    assert c.warning is not None


def test_decay_curve_degenerate_flat():
    theta = DensityMatrix(np.array([[0.4, 0.2, 0.1], [0.2, 0.3, 0.05], [0.1, 0.05, 0.3]]))
    cfg = TrajectoryConfig(degenerate_model(), theta, 40, seed=2, record_offdiag=True)
    c = decay_curve(run_ensemble(cfg, 500), (0, 1))
    assert c.mu == pytest.approx(1.0)
    assert c.passed()
    np.testing.assert_allclose(c.predicted, 0.2)


def test_decay_curve_qubit_rate():
    cfg = TrajectoryConfig(qubit_model(), PLUS, 20, seed=3, record_offdiag=True)
    c = decay_curve(run_ensemble(cfg, 2000), (0, 1))
    assert c.passed()
    assert abs(c.rate - 0.8) < 5 * c.rate_stderr + 1e-3


def test_fixed_point_qubit_batch():
    cfg = TrajectoryConfig(qubit_model(), qubit_state(), 300, seed=4)
    rep = asymptotic_fixed_point_check([r.final_state for r in run_ensemble(cfg, 200)], qubit_model())
    assert rep.passed
    assert rep.n_pending == 0
    assert set(rep.converged_class) <= {0, 1}


def test_fixed_point_degenerate_mixed_single_class():
    cfg = TrajectoryConfig(degenerate_model(), DensityMatrix(np.eye(3) / 3), 400, seed=5)
    finals = [r.final_state for r in run_ensemble(cfg, 100)]
    rep = asymptotic_fixed_point_check(finals, degenerate_model())
    assert rep.passed
    assert any(c == 0 for c in rep.converged_class)


def test_fixed_point_pending_not_failed():
    cfg = TrajectoryConfig(qubit_model(), qubit_state(), 3, seed=6)
    rep = asymptotic_fixed_point_check([r.final_state for r in run_ensemble(cfg, 50)], qubit_model())
    assert rep.n_pending > 0
    assert rep.passed


def test_fixed_point_contradiction_detected():
    # two classes with identical statistics: a spread state is stationary
    bad = DiscreteModel(ObservableSpec([1.0, -1.0]), np.sqrt([[0.5, 0.5], [0.5, 0.5]]))
    rep = asymptotic_fixed_point_check([DensityMatrix(np.diag([0.5, 0.5]))], bad)
    assert rep.contradictions == [0]
    assert not rep.passed


def test_martingale_reports_all_pass():
    reps = martingale_reports(qubit_state(), qubit_model())
    assert {r.quantity for r in reps} >= {"diag_class 0", "diag_class 1", "offdiag (0,1)", "purity_2", "purity_3"}
    assert all(r.passed for r in reps)
    off = [r for r in reps if r.quantity.startswith("offdiag")][0]
    assert off.info["kind"] == "supermartingale"


@given(st.integers(2, 5), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_exact_identities_fuzz(d, K, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, d, K)
    theta = random_state(rng, d)
    assert np.max(np.abs(exact_onestep_diag(theta, model))) <= 1e-12
    assert offdiag_residual(theta, model) <= 1e-12
    for m in (2, 3):
        assert purity_submartingale_check(theta, model, m) >= -1e-12
