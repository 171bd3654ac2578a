import numpy as np
import pytest

from rmpcpg.envs import Mdp, closed_loop_J, example1, example2, u_ref
from rmpcpg.mpc import policy, rollout_states
from rmpcpg.rollouts import PolicyRunner


def test_example1_values(ex1):
    env, spec = ex1
    assert env.L([0.5], [0.2]) == pytest.approx(0.29)
    h = spec.stage_constraints(np.array([0.5]), np.array([0.2]), np.array([0.5]))
    assert float(h[0]) == pytest.approx(0.25 + 0.2 - 1.0)
    assert env.deterministic
    np.testing.assert_allclose(env.step(np.array([0.5]), np.array([0.2]), np.zeros(1)), [0.7])


def test_example2_cost_minimum(ex2):
    env, _ = ex2
    assert env.L([0.5], [2.0]) == 0.0
    assert env.L([0.0], [0.0]) == pytest.approx(20 * 0.25 + 4.0)


def test_example2_noise_bound(ex2):
    env, _ = ex2
    d = env.sample_noise(np.random.default_rng(0), (10**6,))
    assert d.shape == (10**6, 1)
    assert np.max(np.abs(d)) <= 1e-3
    assert np.max(np.abs(d)) > 0.999e-3


def test_example2_reference_and_steady_state(ex2):
    _, spec = ex2
    assert u_ref(0.1) == pytest.approx(0.1)
    # at theta = 0.1 the bound u <= 0.1 binds: the input stays at 0.1
    pe = policy(spec, [1.0 / 3.0], [0.1], with_sensitivity=False)
    assert pe.u_profile[1:, 0] == pytest.approx(0.1, abs=1e-6)


def test_step_matches_model(ex2):
    env, spec = ex2
    U = np.linspace(-0.5, 0.5, spec.N)[:, None]
    X = rollout_states(spec, np.array([0.2]), U, np.array([0.1]))
    s = np.array([0.2])
    for k in range(spec.N):
        s = env.step(s, U[k], np.zeros(1))
        np.testing.assert_allclose(s, X[k + 1], rtol=1e-12)


def test_closed_loop_zero_cost_stub():
    env = Mdp(n=1, m=1, gamma=0.9, step=lambda s, a, d: s, stage_cost=lambda s, a: 0.0,
              sample_noise=lambda rng, shape: np.zeros(tuple(shape) + (1,)),
              initial_state=lambda rng: np.zeros(1), deterministic=True)
    J, se = closed_loop_J(env, lambda s: np.zeros(1), np.random.default_rng(0), horizon=10, n_rollouts=3)
    assert J == 0.0 and se == 0.0


def test_closed_loop_geometric_sum():
    env = Mdp(n=1, m=1, gamma=0.5, step=lambda s, a, d: s, stage_cost=lambda s, a: 1.0,
              sample_noise=lambda rng, shape: np.zeros(tuple(shape) + (1,)),
              initial_state=lambda rng: np.zeros(1))
    J, _ = closed_loop_J(env, lambda s: np.zeros(1), np.random.default_rng(0), horizon=20)
    assert J == pytest.approx((1 - 0.5**20) / 0.5)


def test_example1_options():
    _, spec = example1(N=5, terminal_constraint=False)
    assert spec.N == 5 and spec.n_hf == 0
    env, _ = example2(noise=0.0)
    assert env.deterministic


@pytest.mark.slow
def test_example2_cost_standard_error(ex2):
    env, spec = ex2
    runner = PolicyRunner(spec, None, [0.1])
    J, se = closed_loop_J(env, runner, np.random.default_rng(5), horizon=150, n_rollouts=256,
                          s0=np.zeros(1))
    assert se <= 0.005 * abs(J)
