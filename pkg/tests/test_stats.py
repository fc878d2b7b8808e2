import numpy as np
import pytest
from scipy import stats as sps

from qnd_walk.fixtures import degenerate_model, gaussian_qubit, qubit_model, qubit_state
from qnd_walk.gaussian import YmComponent, YmDistribution, ym_pdf
from qnd_walk.hilbert import DensityMatrix, density_from_pure, purity, trace_distance
from qnd_walk.stats import (
    YmSample,
    born_rule_test,
    count_modes,
    ensemble_mode_sampler,
    histogram,
    luders_batch_check,
    luders_targets,
    ym_compare,
    ym_from_records,
)
from qnd_walk.trajectory import TrajectoryConfig, run_ensemble


def test_born_eigenstate():
    e1 = DensityMatrix(np.diag([0.0, 1.0]))
    recs = run_ensemble(TrajectoryConfig(qubit_model(), e1, 20, seed=1), 200)
    rep = born_rule_test(recs, e1)
    np.testing.assert_array_equal(rep.counts, [0, 200])
    assert rep.chi_square == 0.0
    assert rep.zero_weight_violations == []
    assert rep.passed


def test_born_zero_weight_class_flagged():
    recs = run_ensemble(TrajectoryConfig(qubit_model(), qubit_state(), 200, seed=2), 150)
    rep = born_rule_test(recs, DensityMatrix(np.diag([0.0, 1.0])))
    assert rep.zero_weight_violations == [0]
    assert not rep.passed


def test_born_degenerate_weights():
    theta0 = DensityMatrix(np.eye(3) / 3)
    recs = run_ensemble(TrajectoryConfig(degenerate_model(), theta0, 300, seed=3), 900)
    rep = born_rule_test(recs, theta0)
    np.testing.assert_allclose(rep.expected, [2 / 3, 1 / 3])
    assert np.all(np.abs(rep.z_scores) <= 3)


def test_born_unconverged_cap():
    recs = run_ensemble(TrajectoryConfig(qubit_model(), qubit_state(), 5, seed=4), 200)
    rep = born_rule_test(recs, qubit_state())
    assert rep.unconverged_fraction > 0.01
    assert not rep.passed


def test_born_p_values_not_systematically_small():
    """50 independent seeds: failures at alpha stay within binomial + 3 sigma."""
    cfg = TrajectoryConfig(qubit_model(), qubit_state(), 200, seed=0, record_stride=200)
    alpha, n = 0.01, 50
    pv = [born_rule_test(run_ensemble(cfg.__class__(**{**cfg.__dict__, "seed": 1000 + s}), 500), qubit_state()).p_value for s in range(n)]
    fails = sum(p <= alpha for p in pv)
    assert fails <= n * alpha + 3 * np.sqrt(n * alpha * (1 - alpha))
    # and they look uniform
    assert sps.kstest(pv, "uniform").pvalue > 1e-3


def test_luders_targets():
    t = luders_targets(DensityMatrix(np.eye(3) / 3), degenerate_model().classes)
    np.testing.assert_allclose(t[0].data, np.diag([0.5, 0.5, 0.0]), atol=1e-15)
    assert purity(t[0]) == pytest.approx(0.5)


def test_luders_pure_in_degenerate_class():
    psi = np.array([0.6, 0.8j, 0.0])
    theta0 = density_from_pure(psi)
    recs = run_ensemble(TrajectoryConfig(degenerate_model(), theta0, 100, seed=5), 50)
    rep = luders_batch_check(recs, theta0)
    assert rep.passed
    assert rep.counts == {0: 50}
    assert purity(recs[0].final_state) == pytest.approx(1.0)
    assert trace_distance(recs[0].final_state, theta0) < 1e-12


def test_luders_nondegenerate_projectors():
    recs = run_ensemble(TrajectoryConfig(qubit_model(), qubit_state(), 300, seed=6), 200)
    rep = luders_batch_check(recs, qubit_state())
    assert rep.passed
    assert max(rep.max_distance.values()) < 1e-5


def test_ym_repeated_mean():
    theta0 = DensityMatrix(np.diag([0.3, 0.7]))
    m = gaussian_qubit(2.0)
    recs = run_ensemble(TrajectoryConfig(m, theta0, 100, seed=7, record_stride=100), 1500)
    y = ym_from_records(recs, 100).values
    assert abs(y.mean() + 0.4) <= 3 * y.std(ddof=1) / np.sqrt(y.size)


def test_ym_discrete_outcome_values():
    recs = run_ensemble(TrajectoryConfig(qubit_model(), qubit_state(), 50, seed=8), 10)
    y = ym_from_records(recs, 50)
    assert np.all(np.abs(y.values) <= 1)


def test_ym_too_short():
    recs = run_ensemble(TrajectoryConfig(qubit_model(), qubit_state(), 5, seed=8), 2)
    with pytest.raises(ValueError):
        ym_from_records(recs, 10)


def test_ensemble_eigenstate_matches_repeated():
    e0 = DensityMatrix(np.diag([1.0, 0.0]))
    m = gaussian_qubit(1.0)
    ens = ensemble_mode_sampler(e0, m, 50, 2000, seed=9)
    recs = run_ensemble(TrajectoryConfig(m, e0, 50, seed=9, record_stride=50), 2000)
    rep = ym_from_records(recs, 50)
    # a sharp state is never updated, and both modes read the same streams
    np.testing.assert_array_equal(ens.values, rep.values)


def test_ym_compare_rejects_wrong_weights():
    rng = np.random.default_rng(10)
    vals = np.where(rng.random(2000) < 0.5, 1.0, -1.0) + rng.normal(0, 0.05, 2000)
    pred = YmDistribution("repeated", 10, (YmComponent(0.3, 1.0, 0.0025), YmComponent(0.7, -1.0, 0.0025)))
    rep = ym_compare(YmSample(10, vals), pred)
    assert not rep.passed
    assert rep.n_modes == 2


def test_ym_compare_overlap_flag():
    rng = np.random.default_rng(11)
    vals = rng.normal(0, 1, 1000)
    pred = YmDistribution("repeated", 1, (YmComponent(0.5, -0.5, 1.0), YmComponent(0.5, 0.5, 1.0)))
    rep = ym_compare(YmSample(1, vals), pred)
    assert rep.overlapping
    assert all(c.mean is None for c in rep.components)


def test_count_modes():
    rng = np.random.default_rng(12)
    assert count_modes(rng.normal(0, 1, 2000)) == 1
    bi = np.concatenate([rng.normal(-1, 0.1, 700), rng.normal(1, 0.1, 300)])
    assert count_modes(bi) == 2


def test_histogram_rows():
    rows = histogram([0.0, 0.1, 0.9, 1.0], bins=2, range=(0.0, 1.0))
    assert rows == [(0.0, 0.5, 2), (0.5, 1.0, 2)]
