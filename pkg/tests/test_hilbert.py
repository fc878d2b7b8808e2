import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnd_walk.hilbert import (
    DensityMatrix,
    Projector,
    PureState,
    ValidationError,
    ZeroWeightBlockError,
    density_from_pure,
    project_block,
    purity,
    trace_distance,
)
from qnd_walk.verify import random_state


def test_density_from_basis_state():
    np.testing.assert_array_equal(density_from_pure(np.array([1.0, 0.0])).data, np.diag([1.0, 0.0]))


def test_density_from_symmetric_superposition():
    theta = density_from_pure(np.sqrt([0.5, 0.5]))
    np.testing.assert_allclose(theta.data, np.full((2, 2), 0.5), atol=1e-15)


def test_density_from_unbalanced_superposition():
    theta = density_from_pure(PureState(np.sqrt([0.3, 0.7])))
    np.testing.assert_allclose(theta.diagonal, [0.3, 0.7], atol=1e-15)
    assert theta.data[0, 1].real == pytest.approx(np.sqrt(0.21), abs=1e-15)
    assert theta.data[0, 1].real == pytest.approx(0.45826, abs=1e-5)


def test_density_from_unnormalized_raises():
    with pytest.raises(ValidationError):
        density_from_pure(np.array([1.0, 1.0]))


@pytest.mark.parametrize(
    "data, expected",
    [
        (np.eye(2) / 2, 0.5),
        (np.full((2, 2), 0.5), 1.0),
        (np.diag([0.3, 0.7]), 0.58),
    ],
)
def test_purity_examples(data, expected):
    assert purity(DensityMatrix(data)) == pytest.approx(expected, abs=1e-15)


def test_trace_distance_examples():
    a = DensityMatrix(np.diag([0.3, 0.7]))
    assert trace_distance(a, a) == 0.0
    assert trace_distance(DensityMatrix(np.diag([1.0, 0.0])), DensityMatrix(np.diag([0.0, 1.0]))) == pytest.approx(1.0)
    assert trace_distance(a, DensityMatrix(np.eye(2) / 2)) == pytest.approx(0.2, abs=1e-15)


def test_project_block_mixed():
    theta = DensityMatrix(np.eye(3) / 3)
    st_, w = project_block(theta, Projector.from_indices(3, [0, 1]))
    np.testing.assert_allclose(st_.data, np.diag([0.5, 0.5, 0.0]), atol=1e-15)
    assert w == pytest.approx(2 / 3)


def test_project_block_fixed_point():
    theta = density_from_pure(np.array([0.6, 0.8j, 0.0]))
    st_, w = project_block(theta, Projector.from_indices(3, [0, 1]))
    assert w == pytest.approx(1.0)
    np.testing.assert_allclose(st_.data, theta.data, atol=1e-15)


def test_project_block_zero_weight():
    theta = DensityMatrix(np.diag([1.0, 0.0, 0.0]))
    with pytest.raises(ZeroWeightBlockError) as exc:
        project_block(theta, Projector.from_indices(3, [1, 2]))
    assert exc.value.weight == 0.0


@pytest.mark.parametrize(
    "bad",
    [
        np.array([[0.5, 0.1], [0.2, 0.5]]),  # not Hermitian
        np.diag([0.5, 0.6]),  # trace
        np.diag([1.2, -0.2]),  # negative eigenvalue
        np.ones((2, 3)) / 2,
    ],
)
def test_density_validation(bad):
    with pytest.raises(ValidationError):
        DensityMatrix(bad)


def test_density_is_read_only():
    theta = DensityMatrix(np.eye(2) / 2)
    with pytest.raises(ValueError):
        theta.data[0, 0] = 1.0


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_random_state_invariants(d, seed):
    theta = random_state(np.random.default_rng(seed), d)
    assert 1.0 / d - 1e-12 <= purity(theta) <= 1.0 + 1e-12
    assert abs(np.trace(theta.data) - 1) < 1e-12


@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_trace_distance_metric(d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_state(rng, d) for _ in range(3))
    ab = trace_distance(a, b)
    assert 0.0 <= ab <= 1.0 + 1e-12
    assert ab == pytest.approx(trace_distance(b, a), abs=1e-14)
    assert ab <= trace_distance(a, c) + trace_distance(c, b) + 1e-12
