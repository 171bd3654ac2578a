import numpy as np
import pytest

from rmpcpg.actor import (
    BatchConfig,
    EmptyBatch,
    VisitedState,
    batch_gradient,
    collect_batch,
    estimate_gradient,
    richardson_check,
    train,
    true_gradient_fd,
)
from rmpcpg.critic import AdvantageModel
from rmpcpg.envs import Mdp, example1
from rmpcpg.exploration import Streams
from rmpcpg.mpc import MpcSpec
from rmpcpg.rmpc import RmpcConfig

import jax.numpy as jnp


def test_arithmetic_example():
    # dpi = 2, (eta_bar^2 / eta^2) w = 3  ->  2 * (2 * 3) = 12
    model = AdvantageModel(np.array([0.75]), eta_bar=0.2)
    g = estimate_gradient(model, [VisitedState(np.zeros(1), np.array([[2.0]]), eta=0.1)])
    assert g.grad[0] == pytest.approx(12.0)


def test_zero_critic():
    model = AdvantageModel(np.zeros(2), eta_bar=0.1)
    v = [VisitedState(np.zeros(1), np.array([[1.0], [2.0]]), 0.1)]
    assert np.all(estimate_gradient(model, v).grad == 0.0)


def test_linear_in_critic():
    rng = np.random.default_rng(0)
    v = [VisitedState(np.zeros(1), rng.normal(size=(2, 1)), float(rng.uniform(0.01, 0.1))) for _ in range(10)]
    w1, w2 = rng.normal(size=2), rng.normal(size=2)
    g = lambda w: estimate_gradient(AdvantageModel(w, 0.1), v).grad  # noqa: E731
    np.testing.assert_allclose(g(w1 + w2), g(w1) + g(w2), rtol=1e-12)


def test_empty_batch():
    with pytest.raises(EmptyBatch):
        estimate_gradient(AdvantageModel(np.zeros(1), 0.1), [])


def _quadratic_stub():
    # J(theta) = (theta - 1)^2 / (1 - gamma) with a policy u = theta, cost (a - 1)^2
    gamma = 0.5
    env = Mdp(n=1, m=1, gamma=gamma, step=lambda s, a, d: s, stage_cost=lambda s, a: float((a[0] - 1.0) ** 2),
              sample_noise=lambda rng, shape: np.zeros(tuple(shape) + (1,)),
              initial_state=lambda rng: np.zeros(1), deterministic=True)
    spec = MpcSpec(n=1, m=1, N=1, gamma=gamma, theta_dim=1,
                   dynamics=lambda x, u, th: x, stage_cost=lambda x, u, th: (u[0] - th[0]) ** 2,
                   terminal_cost=lambda x, th: 0.0 * x[0],
                   stage_constraints=lambda x, u, th: jnp.atleast_1d(u[0] - 10.0),
                   terminal_constraints=lambda x, th: jnp.zeros(0), n_h=1)
    return env, spec, gamma


def test_fd_oracle_quadratic():
    env, spec, gamma = _quadratic_stub()
    for theta in (0.0, 0.4, 2.0):
        fd = true_gradient_fd(env, spec, None, [theta], delta=1e-3, horizon=60, n_rollouts=2)
        exact = 2 * (theta - 1.0) * (1 - gamma**60) / (1 - gamma)
        assert fd.grad[0] == pytest.approx(exact, abs=1e-6)


def test_richardson_trend():
    env, spec, _ = _quadratic_stub()
    rc = richardson_check(env, spec, None, [0.3], delta=1e-2, horizon=40, n_rollouts=1)
    d1, d2 = rc.differences
    # exact quadratic: central differences agree to rounding
    assert abs(d1[0]) <= 1e-8 and abs(d2[0]) <= 1e-8


def test_step_size_zero_keeps_theta():
    env, spec = example1(N=10, s0_low=-0.3, s0_high=0.3)
    cfg = RmpcConfig(eta_bar=0.05)
    batch = BatchConfig(n_samples=6, rollout_horizon=20)
    trace = train(env, spec, cfg, [0.5], iterations=2, batch=batch, step_size=0.0, streams=Streams(3),
                  compare=False, oracle=None)
    assert len(trace) == 2
    assert trace.records[0].theta[0] == trace.records[1].theta[0] == 0.5
    assert trace.records[1].grad_rmpc_est is not None


def test_inactive_domain_estimates_agree():
    env, spec = example1(N=10, s0_low=-0.3, s0_high=0.3)
    cfg = RmpcConfig(eta_bar=0.05)
    batch = BatchConfig(n_samples=40, rollout_horizon=60)
    g = {}
    for kind, c in (("RMPC", cfg), ("MPC", None)):
        b = collect_batch(env, spec, c, [0.5], 0.05, batch, Streams(9))
        g[kind] = batch_gradient(b, 0.05)
    diff = abs(g["RMPC"].grad[0] - g["MPC"].grad[0])
    assert diff <= 2 * np.hypot(g["RMPC"].se[0], g["MPC"].se[0]) + 1e-9


def test_fixed_mode_batch_shape():
    env, spec = example1(N=10, s0_low=-0.3, s0_high=0.3)
    b = collect_batch(env, spec, RmpcConfig(eta_bar=0.05), [0.5], 0.05,
                      BatchConfig(mode="fixed", n_trajectories=2, episode_length=3, rollout_horizon=10), Streams(1))
    assert len(b.samples) == 6 and b.scale == 3.0
    assert [c.weight for c in b.samples[:3]] == pytest.approx([1.0, 0.9, 0.81])
