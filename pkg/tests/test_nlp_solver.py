import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmpcpg.corpus import corpus
from rmpcpg.envs import example1
from rmpcpg.mpc import compile as compile_mpc
from rmpcpg.nlp_solver import (
    DEFAULT_OPTIONS,
    DegenerateKkt,
    ParametricNlp,
    SolveStatus,
    kkt_residual,
    kkt_sensitivity,
    solve,
)
from rmpcpg.qp import QpInfeasible, solve_qp

PROBLEMS = corpus()


def fd_sensitivity(nlp, params, h=1e-6):
    cols = []
    for j in range(params.size):
        pp, pm = params.copy(), params.copy()
        pp[j] += h
        pm[j] -= h
        cols.append((solve(nlp, pp).u_star - solve(nlp, pm).u_star) / (2 * h))
    return np.stack(cols, axis=1)


def test_corpus_has_ten_problems():
    assert len(PROBLEMS) >= 10


@pytest.mark.parametrize("prob", PROBLEMS, ids=lambda p: p.name)
def test_corpus_solution(prob):
    sol = solve(prob.nlp, prob.params)
    assert sol.status is SolveStatus.CONVERGED
    assert sol.kkt_residual <= DEFAULT_OPTIONS.kkt_tol
    np.testing.assert_allclose(sol.u_star, prob.u_exact, atol=1e-6)
    # converged invariants
    f, g, c, J = prob.nlp.eval_all(prob.params, sol.u_star)
    assert np.max(c, initial=0.0) <= DEFAULT_OPTIONS.feas_tol
    assert np.min(sol.lambda_star, initial=0.0) >= -DEFAULT_OPTIONS.feas_tol
    assert np.max(np.abs(sol.lambda_star * c), initial=0.0) <= DEFAULT_OPTIONS.kkt_tol
    assert np.max(np.abs(g + J.T @ sol.lambda_star)) <= DEFAULT_OPTIONS.kkt_tol


@pytest.mark.parametrize("prob", [p for p in PROBLEMS if p.du_dp is not None], ids=lambda p: p.name)
def test_corpus_sensitivity(prob):
    sol = solve(prob.nlp, prob.params)
    du = kkt_sensitivity(prob.nlp, sol, prob.params)
    np.testing.assert_allclose(du, prob.du_dp, atol=1e-7)
    fd = fd_sensitivity(prob.nlp, prob.params)
    scale = max(1.0, np.max(np.abs(fd)))
    assert np.max(np.abs(du - fd)) / scale <= 1e-4


@pytest.mark.parametrize("prob", PROBLEMS, ids=lambda p: p.name)
def test_warm_resolve_is_immediate(prob):
    sol = solve(prob.nlp, prob.params)
    again = solve(prob.nlp, prob.params, warm_start=sol)
    assert again.converged
    assert again.iterations <= 2
    np.testing.assert_allclose(again.u_star, sol.u_star, atol=1e-10)


def test_scalar_qp_multiplier():
    prob = PROBLEMS[0]
    sol = solve(prob.nlp, prob.params)
    assert sol.u_star[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.lambda_star[0] == pytest.approx(2.0, abs=1e-8)
    assert bool(sol.active_set[0])


def test_weak_activity_raises_degenerate():
    # min (u - 1)^2 s.t. u <= 1: active with zero multiplier
    nlp = ParametricNlp(1, 1, 1, lambda p, u: (u[0] - p[0]) ** 2, lambda p, u: 2 * (u - p[0]),
                        lambda p, u: np.array([u[0] - 1.0]), lambda p, u: np.array([[1.0]]))
    sol = solve(nlp, np.array([1.0]))
    assert sol.converged
    with pytest.raises(DegenerateKkt):
        kkt_sensitivity(nlp, sol, np.array([1.0]))


def test_licq_failure_raises_degenerate():
    # duplicated active constraint rows
    nlp = ParametricNlp(1, 2, 1, lambda p, u: (u[0] - p[0]) ** 2, lambda p, u: 2 * (u - p[0]),
                        lambda p, u: np.array([u[0] - 1.0, u[0] - 1.0]), lambda p, u: np.array([[1.0], [1.0]]))
    sol = solve(nlp, np.array([2.0]))
    assert sol.converged
    np.testing.assert_allclose(sol.u_star, [1.0], atol=1e-10)
    with pytest.raises(DegenerateKkt):
        kkt_sensitivity(nlp, sol, np.array([2.0]))


def test_infeasible_status():
    nlp = ParametricNlp(1, 1, 1, lambda p, u: u[0], lambda p, u: np.array([1.0]),
                        lambda p, u: np.array([u[0] ** 2 + 1.0]), lambda p, u: np.array([[2 * u[0]]]))
    assert solve(nlp, np.zeros(1)).status is SolveStatus.INFEASIBLE


def test_restoration_recovers_feasibility():
    # linearization at the start is inconsistent, restoration finds u = 2
    nlp = ParametricNlp(1, 2, 1, lambda p, u: u[0], lambda p, u: np.array([1.0]),
                        lambda p, u: np.array([4 - u[0] ** 2, u[0] - 3]),
                        lambda p, u: np.array([[-2 * u[0]], [1.0]]))
    sol = solve(nlp, np.zeros(1), warm_start=np.array([0.1]))
    assert sol.converged
    assert sol.u_star[0] == pytest.approx(2.0, abs=1e-8)


def test_max_iter_status():
    nlp = PROBLEMS[4].nlp
    sol = solve(nlp, PROBLEMS[4].params, options=DEFAULT_OPTIONS.__class__(max_iter=1))
    assert sol.status in (SolveStatus.MAX_ITER, SolveStatus.CONVERGED)
    if sol.status is SolveStatus.MAX_ITER:
        assert sol.iterations == 1


def test_example1_nlp_origin():
    _, spec = example1()
    sol = solve(compile_mpc(spec), np.array([0.0, 0.5]))
    assert sol.converged
    assert abs(sol.u_star[0]) <= 1e-10


def test_example1_nlp_boundary_matches_grid():
    _, spec = example1()
    nlp = compile_mpc(spec)
    sol = solve(nlp, np.array([1.0, 0.5]))
    # grid oracle: at s = 1 the stage-0 constraint admits only u0 = 0
    grid = np.linspace(-0.5, 0.5, 100001)
    feasible = grid[1.0 + 5 * grid**2 - 1.0 <= 0.0]
    assert np.all(feasible == 0.0)
    assert abs(sol.u_star[0]) <= 1e-4
    assert np.max(sol.constraint_values) <= DEFAULT_OPTIONS.feas_tol


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10), st.integers(0, 2**31 - 1))
def test_qp_kkt_property(n, m, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    G = A @ A.T + 0.1 * np.eye(n)
    a = rng.normal(size=n)
    C = rng.normal(size=(m, n))
    b = rng.normal(size=m) + 1.0
    try:
        res = solve_qp(G, a, C, b)
    except QpInfeasible:
        from scipy.optimize import linprog
        lp = linprog(np.zeros(n), A_ub=C, b_ub=b, bounds=[(None, None)] * n)
        assert lp.status == 2
        return
    scale = 1.0 + np.abs(res.lam).max(initial=0.0)
    assert np.max(np.abs(G @ res.x + a + C.T @ res.lam)) <= 1e-8 * scale
    assert np.max(C @ res.x - b, initial=0.0) <= 1e-9 * scale
    assert np.min(res.lam, initial=0.0) >= 0.0
    assert np.max(np.abs(res.lam * (C @ res.x - b)), initial=0.0) <= 1e-8 * scale


def test_kkt_residual_components():
    g = np.array([1.0])
    J = np.array([[1.0]])
    assert kkt_residual(g, np.array([-1.0]), J, np.array([-1.0])) == pytest.approx(1.0)
    assert kkt_residual(g, np.array([0.0]), J, np.array([-1.0])) == pytest.approx(1.0)
    assert kkt_residual(-g, np.array([0.0]), J, np.array([1.0])) == 0.0
