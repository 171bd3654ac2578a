import numpy as np
import pytest

from rmpcpg.dp import example1_action_bounds, value_iteration_example1


@pytest.fixture(scope="module")
def sol():
    return value_iteration_example1()


def test_converged(sol):
    assert sol.bellman_residual <= 1e-9
    assert sol.value[200] == pytest.approx(0.0, abs=1e-12)


def test_lqr_interior(sol):
    # unconstrained discounted LQR: gamma P^2 + (1 - 2 gamma) P - 1 = 0, u = -gamma P / (1 + gamma P) s
    g = 0.9
    P = ((2 * g - 1) + np.sqrt((1 - 2 * g) ** 2 + 4 * g)) / (2 * g)
    K = g * P / (1 + g * P)
    for s in (0.1, 0.25, 0.4):
        assert sol.policy_at(s) == pytest.approx(-K * s, abs=5e-3)
        assert np.interp(s, sol.s_grid, sol.value) == pytest.approx(P * s * s, rel=1e-2)


def test_feasible_and_odd(sol):
    lo, hi = example1_action_bounds(sol.s_grid)
    assert np.all(sol.policy >= lo - 1e-15) and np.all(sol.policy <= hi + 1e-15)
    assert np.all(sol.s_grid**2 + 5 * sol.policy**2 <= 1 + 1e-12)
    np.testing.assert_allclose(sol.policy, -sol.policy[::-1], atol=1e-12)


def test_stall_raises():
    with pytest.raises(RuntimeError):
        value_iteration_example1(n_states=51, n_actions=51, tol=1e-30, max_iter=5)
