"""Projection of explored first inputs onto the nominal feasible set."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from .jaxnlp import nlp_from_jax
from .mpc import InfeasibleState, MpcSpec, PolicyEval, _mpc_constraints, policy, rollout_states, solve_checked
from .nlp_solver import DEFAULT_OPTIONS, NlpSolution, ParametricNlp, SolverOptions
from .rmpc import RmpcConfig, robust_policy

TAIL_REG = 1e-10
EPS_ZERO_TOL = 1e-7


@dataclass
class ProjectionResult:
    a_hat: np.ndarray
    a_perp: np.ndarray
    epsilon: np.ndarray
    e_perp: np.ndarray
    active: bool
    solution: NlpSolution | None
    u_profile: np.ndarray | None = None


@functools.lru_cache(maxsize=None)
def compile_projection(spec: MpcSpec) -> ParametricNlp:
    """``min 1/2 |u_0 - a|^2 + TAIL_REG |u_(1:)|^2  s.t. H(s, u) <= 0``.

    Parameters are ``(s, theta, a)``.
    """
    n, nt, m = spec.n, spec.theta_dim, spec.m

    def unpack(p, u):
        return p[:n], p[n:n + nt], p[n + nt:], u.reshape(spec.N, m)

    def cost(p, u):
        _, _, a, U = unpack(p, u)
        d = U[0] - a
        return 0.5 * jnp.dot(d, d) + TAIL_REG * jnp.sum(U[1:] ** 2)

    def cons(p, u):
        s, th, _, U = unpack(p, u)
        return _mpc_constraints(spec, rollout_states(spec, s, U, th), U, th)

    n_con = spec.N * spec.n_h + spec.n_hf
    return nlp_from_jax(cost, cons, spec.n_dec, n_con, n + nt + m, name=f"projection({spec.name})")


def _feasible_mask(spec: MpcSpec, s, theta, A: np.ndarray, tails: list[np.ndarray], tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Which first inputs in ``A`` (k, m) admit one of the candidate tails."""
    nlp = compile_projection(spec)
    k = A.shape[0]
    ok = np.zeros(k, dtype=bool)
    which = np.full(k, -1)
    p = np.concatenate([np.atleast_1d(s), np.atleast_1d(theta), np.zeros(spec.m)])
    for j, tail in enumerate(tails):
        todo = np.flatnonzero(~ok)
        if todo.size == 0:
            break
        U = np.concatenate([A[todo], np.broadcast_to(tail, (todo.size, tail.size))], axis=1)
        c = nlp.constraints_batch(p, U)
        good = np.max(c, axis=1, initial=-np.inf) <= tol
        ok[todo[good]] = True
        which[todo[good]] = j
    return ok, which


def project_many(
    spec: MpcSpec,
    s,
    theta,
    A,
    tails: list[np.ndarray] | None = None,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> list[ProjectionResult]:
    """Project several proposed first inputs at the same state.

    Inputs that are feasible together with one of the candidate ``tails``
    (flattened ``u_(1:N-1)``) are returned unchanged without solving. The
    others are projected by the NLP in lexicographic order of the inputs,
    each warm-started from the previous solution.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, spec.m)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if tails is None:
        tails = [policy(spec, s, theta, with_sensitivity=False).u_profile[1:].ravel()]
    tails = [np.asarray(t, dtype=float).ravel() for t in tails]
    ok, which = _feasible_mask(spec, s, theta, A, tails, options.feas_tol)
    out: list[ProjectionResult | None] = [None] * A.shape[0]
    for i in np.flatnonzero(ok):
        U = np.concatenate([A[i], tails[which[i]]]).reshape(spec.N, spec.m)
        out[i] = ProjectionResult(A[i].copy(), A[i].copy(), np.zeros(spec.m), np.zeros(spec.m), False, None, U)
    nlp = compile_projection(spec)
    rest = np.flatnonzero(~ok)
    order = rest[np.lexsort(A[rest].T[::-1])]
    warm: np.ndarray | NlpSolution | None = None
    for i in order:
        p = np.concatenate([s, theta, A[i]])
        start = warm.u_star if isinstance(warm, NlpSolution) else np.concatenate([A[i], tails[0]])
        try:
            sol = solve_checked(nlp, p, warm=start, options=options)
        except InfeasibleState:
            raise InfeasibleState(f"no feasible input profile at s={s.tolist()}") from None
        warm = sol
        U = sol.u_star.reshape(spec.N, spec.m)
        eps = U[0] - A[i]
        if np.linalg.norm(eps) <= EPS_ZERO_TOL:
            # a itself is feasible together with the solved tail: keep it exactly
            U_a = np.concatenate([A[i][None, :], U[1:]])
            if np.max(nlp.constraints(p, U_a.ravel()), initial=-np.inf) <= options.feas_tol:
                U, eps = U_a, np.zeros(spec.m)
        out[i] = ProjectionResult(A[i].copy(), U[0].copy(), eps, np.zeros(spec.m),
                                  bool(np.linalg.norm(eps) > EPS_ZERO_TOL), sol, U)
    return out  # type: ignore[return-value]


def project(spec: MpcSpec, s, theta, a, tails: list[np.ndarray] | None = None,
            options: SolverOptions = DEFAULT_OPTIONS) -> ProjectionResult:
    """Nearest feasible first input to ``a`` under the nominal constraints at ``s``.

    ``e_perp`` of the result is zero; :func:`explore_and_project` fills it.

    Raises:
        InfeasibleState: if no feasible input profile exists at ``s``.
    """
    return project_many(spec, s, theta, np.atleast_1d(a)[None, :], tails=tails, options=options)[0]


def explore_and_project(
    spec: MpcSpec,
    cfg: RmpcConfig | None,
    s,
    theta,
    e_hat,
    base: PolicyEval | None = None,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> ProjectionResult:
    """Explore around the robust policy and project back onto the feasible set.

    Args:
        cfg: Robust scheme configuration; ``None`` explores around the
            nominal policy instead.
        e_hat: Exploration vector, ``|e_hat| <= eta`` of the base policy.
        base: Precomputed policy evaluation at ``(s, theta)``.
    """
    if base is None:
        if cfg is None:
            base = policy(spec, s, theta, options=options, with_sensitivity=False)
        else:
            base = robust_policy(spec, cfg, s, theta, options=options, with_sensitivity=False)
    e = np.atleast_1d(np.asarray(e_hat, dtype=float))
    return explore_many(spec, s, theta, base, e[None, :], options=options)[0]


def explore_many(spec: MpcSpec, s, theta, base: PolicyEval, E, options: SolverOptions = DEFAULT_OPTIONS) -> list[ProjectionResult]:
    """Vectorized :func:`explore_and_project` for explorations ``E`` (k, m)."""
    E = np.atleast_2d(np.asarray(E, dtype=float)).reshape(-1, spec.m)
    A = base.u0[None, :] + E
    res = project_many(spec, s, theta, A, tails=[base.u_profile[1:].ravel()], options=options)
    for r, e in zip(res, E):
        r.e_perp = e + r.epsilon
    return res
