import numpy as np

from qnd_walk.fixtures import degenerate_model, qubit_model, qubit_state
from qnd_walk.hilbert import DensityMatrix
from qnd_walk.verify import discrete_checks, fuzz_suite, joint_steps


def test_joint_steps_budget():
    assert joint_steps(2) == 8
    assert joint_steps(6) == 6
    assert joint_steps(4, budget=4096) == 6


def test_qubit_checks_pass():
    checks = discrete_checks(qubit_model(), qubit_state())
    bad = [c for c in checks if not c.passed]
    assert not bad, bad
    names = {c.name for c in checks}
    assert {"completeness", "product_form", "joint_sum", "state_not_martingale"} <= names


def test_diagonal_state_skips_non_martingale_check():
    checks = discrete_checks(qubit_model(), DensityMatrix(np.diag([0.3, 0.7])))
    c = [c for c in checks if c.name == "state_not_martingale"][0]
    assert c.skipped


def test_degenerate_checks_pass():
    checks = discrete_checks(degenerate_model(), DensityMatrix(np.eye(3) / 3))
    assert all(c.passed for c in checks if not c.skipped)


def test_small_fuzz_suite():
    res = fuzz_suite(10, seed=3)
    assert res.passed
    assert set(res.worst()) >= {"diag_martingale", "offdiag_factor", "nielsen_m2", "nielsen_m3"}
    d = res.to_dict()
    assert d["n_checks"] == len(res.checks)
