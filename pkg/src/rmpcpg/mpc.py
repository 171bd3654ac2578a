"""Single-shooting MPC schemes and the policies they define.

An :class:`MpcSpec` collects dynamics, costs and constraints as JAX-traceable
callables. :func:`compile` eliminates the states by forward simulation and
returns a :class:`~rmpcpg.nlp_solver.ParametricNlp` in the stacked input
profile, with parameters ``p = (s, theta)``. :func:`policy` solves it and
returns the first input together with its derivative in ``theta``.
"""

from __future__ import annotations

import functools
import logging
from collections.abc import Callable
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .jaxnlp import nlp_from_jax
from .nlp_solver import (
    DEFAULT_OPTIONS,
    DegenerateKkt,
    NlpSolution,
    ParametricNlp,
    SolverOptions,
    SolveStatus,
    kkt_sensitivity,
    solve,
)

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


class InfeasibleState(Exception):
    """The MPC problem has no feasible input profile at the given state."""


@dataclass(frozen=True, eq=False)
class MpcSpec:
    """Structured MPC ingredients.

    Callables take and return JAX arrays: ``dynamics(x, u, theta)``,
    ``stage_cost(x, u, theta)``, ``terminal_cost(x, theta)``,
    ``stage_constraints(x, u, theta)`` (length ``n_h``) and
    ``terminal_constraints(x, theta)`` (length ``n_hf``, possibly 0).
    The compiled cost is ``V(x_N) + sum_k gamma**k * l(x_k, u_k)``.
    """

    n: int
    m: int
    N: int
    gamma: float
    theta_dim: int
    dynamics: Callable
    stage_cost: Callable
    terminal_cost: Callable
    stage_constraints: Callable
    terminal_constraints: Callable
    n_h: int
    n_hf: int = 0
    name: str = "mpc"

    @property
    def n_dec(self) -> int:
        return self.N * self.m

    def split(self, p):
        return p[: self.n], p[self.n :]

    def params(self, s, theta) -> np.ndarray:
        return np.concatenate([np.atleast_1d(np.asarray(s, dtype=float)),
                               np.atleast_1d(np.asarray(theta, dtype=float))])


@dataclass
class PolicyEval:
    u0: np.ndarray
    u_profile: np.ndarray
    x_traj: np.ndarray
    eta: float
    dpi_dtheta: np.ndarray | None
    objective: float
    solution: NlpSolution
    sensitivity_method: str = "kkt"


def rollout_states(spec: MpcSpec, x0, U, theta):
    """JAX forward simulation; returns states of shape (N + 1, n)."""

    def step(x, u):
        xn = spec.dynamics(x, u, theta)
        return xn, xn

    _, xs = jax.lax.scan(step, x0, U)
    return jnp.concatenate([x0[None, :], xs], axis=0)


def _mpc_cost(spec: MpcSpec, X, U, theta):
    disc = spec.gamma ** jnp.arange(spec.N)
    stage = jax.vmap(lambda x, u: spec.stage_cost(x, u, theta))(X[:-1], U)
    return spec.terminal_cost(X[-1], theta) + jnp.dot(disc, stage)


def _mpc_constraints(spec: MpcSpec, X, U, theta):
    hs = jax.vmap(lambda x, u: spec.stage_constraints(x, u, theta))(X[:-1], U).reshape(-1)
    if spec.n_hf:
        return jnp.concatenate([hs, spec.terminal_constraints(X[-1], theta).reshape(-1)])
    return hs


def simulate(spec: MpcSpec, s, u_profile, theta) -> np.ndarray:
    """Numpy forward simulation ``x_{k+1} = f(x_k, u_k)`` from ``x_0 = s``."""
    U = np.asarray(u_profile, dtype=float).reshape(spec.N, spec.m)
    x0 = np.atleast_1d(np.asarray(s, dtype=float))
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    return np.asarray(_simulate_jit(spec)(x0, U, th))


@functools.lru_cache(maxsize=None)
def _simulate_jit(spec: MpcSpec):
    return jax.jit(lambda x0, U, th: rollout_states(spec, x0, U, th))


@functools.lru_cache(maxsize=None)
def compile(spec: MpcSpec) -> ParametricNlp:  # noqa: A001 - domain name
    """Single-shooting NLP of the nominal scheme, parameters ``(s, theta)``."""

    def unpack(p, u):
        s, th = p[: spec.n], p[spec.n :]
        U = u.reshape(spec.N, spec.m)
        return s, th, U

    def cost(p, u):
        s, th, U = unpack(p, u)
        return _mpc_cost(spec, rollout_states(spec, s, U, th), U, th)

    def cons(p, u):
        s, th, U = unpack(p, u)
        return _mpc_constraints(spec, rollout_states(spec, s, U, th), U, th)

    n_con = spec.N * spec.n_h + spec.n_hf
    return nlp_from_jax(cost, cons, spec.n_dec, n_con, spec.n + spec.theta_dim, name=spec.name)


def shifted(prev: PolicyEval, m: int) -> np.ndarray:
    """Shift-by-one warm start: drop u_0 and repeat the last input."""
    U = np.asarray(prev.u_profile, dtype=float).reshape(-1, m)
    if prev.solution.u_star.size > U.size:
        tail = prev.solution.u_star[U.size:]
    else:
        tail = np.zeros(0)
    return np.concatenate([U[1:].ravel(), U[-1], tail])


def solve_checked(nlp: ParametricNlp, p, warm=None, options: SolverOptions = DEFAULT_OPTIONS) -> NlpSolution:
    """Solve with a cold retry; raise InfeasibleState if no feasible iterate is found.

    A MaxIter result with a feasible iterate is returned as is. This happens
    at states where the active constraint gradients vanish and no KKT point
    exists (e.g. the boundary states of the first benchmark).
    """
    sol = solve(nlp, p, warm_start=warm, options=options)
    if not sol.converged and warm is not None:
        cold = solve(nlp, p, options=options)
        if cold.converged or _max_violation(cold) < _max_violation(sol):
            sol = cold
    if sol.status is SolveStatus.INFEASIBLE or _max_violation(sol) > options.feas_tol:
        raise InfeasibleState(f"{nlp.name}: no feasible input profile at p={np.asarray(p).tolist()}")
    if not sol.converged:
        logger.debug("%s: returning feasible non-KKT iterate (res %.2e)", nlp.name, sol.kkt_residual)
    return sol


def _max_violation(sol: NlpSolution) -> float:
    return float(np.max(sol.constraint_values, initial=0.0))


def first_input_sensitivity(
    nlp: ParametricNlp,
    sol: NlpSolution,
    p: np.ndarray,
    n: int,
    m: int,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> tuple[np.ndarray, str]:
    """``d u0* / d theta`` with shape (theta_dim, m) and the method used.

    Uses the KKT system when it is nondegenerate, central finite differences
    of warm-started re-solves otherwise.
    """
    try:
        du = kkt_sensitivity(nlp, sol, p, options=options)
        return du[:m, n:].T.copy(), "kkt"
    except DegenerateKkt as exc:
        logger.debug("%s: %s; using finite differences", nlp.name, exc)
    n_th = p.size - n
    out = np.zeros((n_th, m))
    for j in range(n_th):
        h = FD_STEP * max(1.0, abs(p[n + j]))
        pp, pm = p.copy(), p.copy()
        pp[n + j] += h
        pm[n + j] -= h
        up = solve_checked(nlp, pp, warm=sol.u_star, options=options).u_star[:m]
        um = solve_checked(nlp, pm, warm=sol.u_star, options=options).u_star[:m]
        out[j] = (up - um) / (2.0 * h)
    return out, "fd"


def policy(
    spec: MpcSpec,
    s,
    theta,
    warm=None,
    options: SolverOptions = DEFAULT_OPTIONS,
    with_sensitivity: bool = True,
) -> PolicyEval:
    """Nominal MPC policy ``pi_theta(s)``.

    Args:
        warm: Initial input profile (e.g. from :func:`shifted`) or a previous
            NlpSolution at nearby parameters.
        with_sensitivity: Skip the derivative when only the action is needed.

    Raises:
        InfeasibleState: if no feasible input profile exists at ``s``.
    """
    nlp = compile(spec)
    p = spec.params(s, theta)
    sol = solve_checked(nlp, p, warm=warm, options=options)
    U = sol.u_star.reshape(spec.N, spec.m)
    dpi, method = (None, "none")
    if with_sensitivity:
        dpi, method = first_input_sensitivity(nlp, sol, p, spec.n, spec.m, options)
    return PolicyEval(
        u0=U[0].copy(),
        u_profile=U.copy(),
        x_traj=simulate(spec, p[: spec.n], U, p[spec.n :]),
        eta=0.0,
        dpi_dtheta=dpi,
        objective=sol.objective,
        solution=sol,
        sensitivity_method=method,
    )
