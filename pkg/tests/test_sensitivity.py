import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmpcpg.mpc import simulate
from rmpcpg.sensitivity import propagate


def test_example1_unit(ex1):
    _, spec = ex1
    U = np.linspace(-0.1, 0.1, spec.N)
    sens = propagate(spec, simulate(spec, [0.3], U, [0.5]), U, [0.5])
    assert np.all(sens.S[0] == 0.0)
    np.testing.assert_array_equal(sens.S[1:, 0, 0], np.ones(spec.N))


def test_example2_closed_form(ex2):
    _, spec = ex2
    U = np.zeros(spec.N)
    sens = propagate(spec, simulate(spec, [0.0], U, [0.1]), U, [0.1])
    k = np.arange(1, spec.N + 1)
    np.testing.assert_allclose(sens.S[1:, 0, 0], 0.1 * 0.97 ** (k - 1), rtol=0, atol=1e-12)
    assert sens.S[0, 0, 0] == 0.0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["ex1", "ex2"]))
def test_matches_finite_differences(request_fixtures, seed, which):
    spec, theta = request_fixtures[which]
    rng = np.random.default_rng(seed)
    U = rng.uniform(-0.3, 0.3, spec.N)
    s = rng.uniform(-0.9, 0.9, 1)
    sens = propagate(spec, simulate(spec, s, U, theta), U, theta)
    d = 1e-6
    Up, Um = U.copy(), U.copy()
    Up[0] += d
    Um[0] -= d
    fd = (simulate(spec, s, Up, theta) - simulate(spec, s, Um, theta)) / (2 * d)
    np.testing.assert_allclose(sens.S[:, :, 0], fd, atol=1e-6)


@pytest.fixture(scope="module")
def request_fixtures(ex1, ex2):
    return {"ex1": (ex1[1], np.array([0.5])), "ex2": (ex2[1], np.array([0.1]))}


def test_dimension_mismatch(ex1):
    _, spec = ex1
    with pytest.raises(ValueError):
        propagate(spec, np.zeros(3), np.zeros(2))


def test_inconsistent_trajectory(ex1):
    _, spec = ex1
    U = np.zeros(spec.N)
    with pytest.raises(ValueError):
        propagate(spec, np.ones(spec.N + 1) * np.arange(spec.N + 1), U)
