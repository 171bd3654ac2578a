import jax.numpy as jnp
import numpy as np
import pytest
from scipy.optimize import minimize, minimize_scalar

from rmpcpg.envs import example1, u_ref
from rmpcpg.mpc import MpcSpec, compile as compile_mpc, policy, shifted, simulate
from rmpcpg.nlp_solver import DEFAULT_OPTIONS, solve


def test_example1_counts(ex1):
    _, spec = ex1
    nlp = compile_mpc(spec)
    assert nlp.n_dec == spec.N
    assert nlp.n_con == spec.N + 1


def test_constant_dynamics_constraints():
    spec = MpcSpec(n=1, m=1, N=5, gamma=0.9, theta_dim=1,
                   dynamics=lambda x, u, th: x, stage_cost=lambda x, u, th: jnp.sum(u**2),
                   terminal_cost=lambda x, th: 0.0 * x[0],
                   stage_constraints=lambda x, u, th: -jnp.ones(1), terminal_constraints=lambda x, th: jnp.zeros(0),
                   n_h=1)
    c = compile_mpc(spec).constraints(np.array([0.3, 0.0]), np.arange(5.0))
    np.testing.assert_array_equal(c, -np.ones(5))


def test_example2_cost_at_zero_input(ex2):
    _, spec = ex2
    theta = 0.1
    direct = 0.0
    for k in range(51):
        direct += 0.9**k * (10 * (0.0 - 1.0 / 3.0) ** 2 + (0.0 - u_ref(theta)) ** 2)
    val = compile_mpc(spec).cost(np.array([0.0, theta]), np.zeros(51))
    assert val == pytest.approx(direct, rel=1e-14)


def test_policy_origin(ex1):
    _, spec = ex1
    pe = policy(spec, [0.0], [0.5])
    assert abs(pe.u0[0]) <= 1e-12
    assert pe.objective == pytest.approx(0.0, abs=1e-14)
    assert pe.eta == 0.0


def test_policy_boundary_state(ex1):
    _, spec = ex1
    pe = policy(spec, [1.0], [0.5])
    assert abs(pe.u0[0]) <= 1e-4
    # the stage-0 constraint is active: the policy sits on the feasible-set bound
    assert abs(1.0 + 5 * pe.u0[0] ** 2 - 1.0) <= DEFAULT_OPTIONS.act_tol
    assert pe.solution.constraint_values[0] <= DEFAULT_OPTIONS.feas_tol


def test_trajectory_recursion(ex1):
    _, spec = ex1
    pe = policy(spec, [0.7], [0.5])
    X = pe.x_traj
    assert X[0, 0] == 0.7
    np.testing.assert_allclose(X[1:, 0], X[:-1, 0] + pe.u_profile[:, 0], atol=1e-12)


def _inner_cost(spec, s, theta, u0):
    """Best cost with u0 fixed, tail optimized by SLSQP (independent oracle)."""
    N = spec.N

    def traj(tail):
        u = np.concatenate([[u0], tail])
        x = np.empty(N + 1)
        x[0] = s
        for k in range(N):
            x[k + 1] = x[k] + u[k]
        return x, u

    def cost(tail):
        x, u = traj(tail)
        return x[N] ** 2 + np.sum(0.9 ** np.arange(N) * (theta * x[:N] ** 2 + u**2))

    def cons(tail):
        x, u = traj(tail)
        return -np.concatenate([x[:N] ** 2 + 5 * u**2 - 1.0, [x[N] ** 2 - 1.0]])

    r = minimize(cost, np.zeros(N - 1), constraints=[{"type": "ineq", "fun": cons}], method="SLSQP",
                 options={"ftol": 1e-12, "maxiter": 500})
    return r.fun if r.success and np.min(cons(r.x)) >= -1e-9 else np.inf


@pytest.mark.parametrize("s", [-0.95, -0.6, -0.2, 0.3, 0.8, 0.9])
def test_policy_matches_brute_force(ex1, s):
    _, spec = ex1
    theta = 0.5
    pe = policy(spec, [s], [theta], with_sensitivity=False)
    ub = np.sqrt((1 - s * s) / 5)
    grid = np.linspace(-ub, ub, 41)
    vals = np.array([_inner_cost(spec, s, theta, u) for u in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, 40)]
    r = minimize_scalar(lambda u: _inner_cost(spec, s, theta, u), bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-7})
    assert pe.u0[0] == pytest.approx(r.x, abs=1e-3)
    assert pe.objective <= r.fun + 1e-6
    assert pe.objective == pytest.approx(r.fun, abs=1e-3)


@pytest.mark.parametrize("s", [-0.5, 0.2, 0.5])
def test_dpi_dtheta_matches_fd(ex1, s):
    _, spec = ex1
    pe = policy(spec, [s], [0.5])
    assert pe.sensitivity_method == "kkt"
    h = 1e-5
    up = policy(spec, [s], [0.5 + h], with_sensitivity=False).u0
    um = policy(spec, [s], [0.5 - h], with_sensitivity=False).u0
    fd = (up - um) / (2 * h)
    assert abs(pe.dpi_dtheta[0, 0] - fd[0]) <= 1e-4 * max(1.0, abs(fd[0]))


def test_dpi_example2_degenerate_and_regular(ex2):
    _, spec = ex2
    for theta, method in [(0.1, "fd"), (0.12, "kkt")]:
        pe = policy(spec, [0.0], [theta])
        assert pe.sensitivity_method == method
        h = 1e-6
        fd = (policy(spec, [0.0], [theta + h], with_sensitivity=False).u0
              - policy(spec, [0.0], [theta - h], with_sensitivity=False).u0) / (2 * h)
        assert abs(pe.dpi_dtheta[0, 0] - fd[0]) <= 1e-5 * abs(fd[0])


def test_warm_start_domain_regression(ex1):
    _, spec = ex1
    grid = np.linspace(-1, 1, 41)
    prev = None
    for s in grid:
        cold = policy(spec, [s], [0.5], with_sensitivity=False)
        if prev is not None:
            warm = policy(spec, [s], [0.5], warm=prev.solution.u_star, with_sensitivity=False)
            assert warm.u0[0] == pytest.approx(cold.u0[0], abs=1e-6)
        prev = cold


def test_shifted_warm_start(ex2):
    _, spec = ex2
    pe = policy(spec, [0.0], [0.12], with_sensitivity=False)
    w = shifted(pe, 1)
    assert w.shape == (51,)
    np.testing.assert_array_equal(w[:-1], pe.u_profile[1:, 0])
    assert w[-1] == pe.u_profile[-1, 0]


def test_horizon_sweep_insensitive():
    grid = np.linspace(-0.95, 0.95, 9)
    curves = []
    for N in (10, 20, 30):
        _, spec = example1(N=N)
        curves.append([policy(spec, [s], [0.5], with_sensitivity=False).u0[0] for s in grid])
    curves = np.array(curves)
    assert np.max(np.abs(curves[1] - curves[2])) <= 1e-3
    assert np.max(np.abs(curves[0] - curves[1])) <= 1e-2


def test_simulate_matches_dynamics(ex2):
    _, spec = ex2
    U = np.linspace(-1, 1, 51)
    X = simulate(spec, [0.2], U, [0.1])
    x = 0.2
    for k in range(51):
        assert X[k, 0] == pytest.approx(x, abs=1e-13)
        x = 0.97 * x + 0.1 * U[k]
