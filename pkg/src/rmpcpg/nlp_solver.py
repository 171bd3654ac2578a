"""Small dense parametric NLP solver with solution sensitivities.

The problems handled here have the form

    min_u  Phi(p, u)   s.t.  H(p, u) <= 0

with a parameter vector ``p`` (state and policy parameters concatenated for
MPC schemes). :func:`solve` is an SQP method with a damped BFGS Hessian, an
l1 merit line search with second-order correction and the dual active-set QP
of :mod:`rmpcpg.qp`. :func:`kkt_sensitivity` differentiates the primal
solution with respect to ``p`` through the linearized KKT system.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from .qp import QpInfeasible, solve_qp

logger = logging.getLogger(__name__)


class SolveStatus(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


class DegenerateKkt(Exception):
    """LICQ or strict complementarity fails at the solution."""


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-8
    feas_tol: float = 1e-8
    act_tol: float = 1e-6
    strict_tol: float = 1e-8
    max_iter: int = 200
    hessian: str = "bfgs"  # "bfgs" or "exact"


DEFAULT_OPTIONS = SolverOptions()


@dataclass(eq=False)
class ParametricNlp:
    """Inequality-constrained NLP ``min Phi(p, u) s.t. H(p, u) <= 0``.

    The four first-order callbacks are mandatory. ``hessian(p, u, lam)``
    returns an approximation of the Lagrangian Hessian used to seed the
    quasi-Newton matrix (identity when absent). The remaining callbacks are
    optional fast paths; missing second-order information is obtained by
    central differences of the first-order callbacks.
    """

    n_dec: int
    n_con: int
    n_par: int
    cost: Callable[[np.ndarray, np.ndarray], float]
    cost_grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constraints: Callable[[np.ndarray, np.ndarray], np.ndarray]
    constraints_jac: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    evaluate: Callable[[np.ndarray, np.ndarray], tuple] | None = None
    lagrangian_hessian: Callable | None = None
    lagrangian_cross: Callable | None = None
    constraints_param_jac: Callable | None = None
    constraints_batch: Callable | None = None
    name: str = ""

    def eval_all(self, p, u):
        """Return ``(Phi, grad Phi, H, dH/du)`` as numpy objects."""
        if self.evaluate is not None:
            f, g, c, J = self.evaluate(p, u)
            return (
                float(f),
                np.asarray(g, dtype=float),
                np.asarray(c, dtype=float).reshape(self.n_con),
                np.asarray(J, dtype=float).reshape(self.n_con, self.n_dec),
            )
        return (
            float(self.cost(p, u)),
            np.asarray(self.cost_grad(p, u), dtype=float),
            np.asarray(self.constraints(p, u), dtype=float).reshape(self.n_con),
            np.asarray(self.constraints_jac(p, u), dtype=float).reshape(self.n_con, self.n_dec),
        )


@dataclass
class NlpSolution:
    u_star: np.ndarray
    lambda_star: np.ndarray
    active_set: np.ndarray
    kkt_residual: float
    status: SolveStatus
    objective: float
    iterations: int = 0
    constraint_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    working_set: list[int] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


def kkt_residual(g, c, J, lam) -> float:
    """Infinity norm of stationarity, feasibility, complementarity and sign violations."""
    stat = np.max(np.abs(g + J.T @ lam), initial=0.0)
    feas = np.max(c, initial=0.0)
    comp = np.max(np.abs(lam * c), initial=0.0)
    sign = np.max(-lam, initial=0.0)
    return float(max(stat, max(feas, 0.0), comp, max(sign, 0.0)))


def _make_pd(B: np.ndarray, rel_floor: float = 1e-6) -> np.ndarray:
    B = 0.5 * (B + B.T)
    try:
        d = np.diag(np.linalg.cholesky(B))
        # cheap conditioning proxy from the Cholesky diagonal
        if np.min(d) ** 2 >= rel_floor * max(np.max(np.diag(B)), 1.0):
            return B
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(B)
    scale = max(np.max(np.abs(w)), 1.0)
    w = np.maximum(np.abs(w), rel_floor * scale)
    return (V * w) @ V.T


def _initial_hessian(nlp: ParametricNlp, p, u, lam) -> np.ndarray:
    if nlp.hessian is None:
        return np.eye(nlp.n_dec)
    return _make_pd(np.asarray(nlp.hessian(p, u, lam), dtype=float))


def _damped_bfgs(B, s, y):
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300 or not np.all(np.isfinite(y)):
        return B
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        r = theta * y + (1.0 - theta) * Bs
    else:
        r = y
    sr = float(s @ r)
    if sr <= 1e-300:
        return B
    return B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / sr


def _merit(f, c, mu):
    return f + mu * float(np.sum(np.maximum(c, 0.0)))


def _restoration_nlp(nlp: ParametricNlp, u_ref: np.ndarray, rho: float = 1e-4) -> ParametricNlp:
    """Minimize a violation bound sigma with ``H(p, u) <= sigma, sigma >= 0``."""
    n, m = nlp.n_dec, nlp.n_con

    def evaluate(p, z):
        u, sig = z[:n], z[n]
        _, _, c, J = nlp.eval_all(p, u)
        du = u - u_ref
        f = sig + 0.5 * rho * float(du @ du)
        g = np.concatenate([rho * du, [1.0]])
        cc = np.concatenate([c - sig, [-sig]])
        JJ = np.zeros((m + 1, n + 1))
        JJ[:m, :n] = J
        JJ[:m, n] = -1.0
        JJ[m, n] = -1.0
        return f, g, cc, JJ

    def hessian(p, z, lam):
        B = np.eye(n + 1)
        if nlp.hessian is not None:
            B[:n, :n] = nlp.hessian(p, z[:n], lam[:m])
        return B

    def first(i):
        return lambda p, z: evaluate(p, z)[i]

    return ParametricNlp(
        n_dec=n + 1, n_con=m + 1, n_par=nlp.n_par,
        cost=first(0), cost_grad=first(1), constraints=first(2), constraints_jac=first(3),
        hessian=hessian, evaluate=evaluate, name=f"restoration({nlp.name})",
    )


def solve(
    nlp: ParametricNlp,
    params,
    warm_start=None,
    options: SolverOptions = DEFAULT_OPTIONS,
    _restoring: bool = False,
) -> NlpSolution:
    """Solve the NLP at ``params``.

    Args:
        nlp: Problem definition.
        params: Parameter vector.
        warm_start: Initial decision vector, or a previous :class:`NlpSolution`
            whose iterate, multipliers and active set seed the solve.
        options: Tolerances and iteration cap.

    Returns:
        NlpSolution. ``status`` is Converged only if the KKT residual is below
        ``kkt_tol`` and the iterate is feasible to ``feas_tol``.
    """
    p = np.asarray(params, dtype=float)
    opts = options
    working: list[int] | None = None
    lam = np.zeros(nlp.n_con)
    if isinstance(warm_start, NlpSolution):
        x = np.array(warm_start.u_star, dtype=float)
        lam = np.array(warm_start.lambda_star, dtype=float)
        working = list(warm_start.working_set)
    elif warm_start is not None:
        x = np.array(warm_start, dtype=float).reshape(nlp.n_dec)
    else:
        x = np.zeros(nlp.n_dec)

    f, g, c, J = nlp.eval_all(p, x)
    if working is None:
        working = [int(i) for i in np.flatnonzero(c >= -opts.act_tol)]
    B = _initial_hessian(nlp, p, x, lam)
    # best feasible iterate, returned if the iteration cap is hit elsewhere
    best = (x, f, g, c, J, lam) if np.max(c, initial=0.0) <= opts.feas_tol else None
    mu = 1.0
    last_res = np.inf
    it = 0
    restored = False
    while it < opts.max_iter:
        it += 1
        if opts.hessian == "exact" and nlp.hessian is not None and it > 1:
            B = _make_pd(np.asarray(nlp.hessian(p, x, lam), dtype=float))
        try:
            qp = solve_qp(B, g, J, -c, working=working)
        except QpInfeasible:
            if _restoring or restored:
                return _finish(nlp, p, x, lam, working, SolveStatus.INFEASIBLE, it, f, c, g, J)
            x_new, ok = _restore(nlp, p, x, opts)
            restored = True
            if not ok:
                return _finish(nlp, p, x, lam, working, SolveStatus.INFEASIBLE, it, f, c, g, J)
            x = x_new
            f, g, c, J = nlp.eval_all(p, x)
            working = [int(i) for i in np.flatnonzero(c >= -opts.act_tol)]
            B = _initial_hessian(nlp, p, x, np.zeros(nlp.n_con))
            continue
        d, lam_qp = qp.x, qp.lam
        working = qp.active
        res = kkt_residual(g, c, J, lam_qp)
        last_res = res
        if res <= opts.kkt_tol and np.max(c, initial=0.0) <= opts.feas_tol:
            lam = lam_qp
            return _finish(nlp, p, x, lam, working, SolveStatus.CONVERGED, it, f, c, g, J, res)

        mu = max(mu, 1.5 * float(np.max(lam_qp, initial=0.0)) + 1e-8)
        cviol = float(np.sum(np.maximum(c, 0.0)))
        phi0 = f + mu * cviol
        D = float(g @ d) - mu * cviol
        if D >= 0.0:
            D = -float(d @ B @ d)
        alpha = 1.0
        accepted = False
        tried_soc = False
        while alpha > 1e-12:
            xt = x + alpha * d
            ft, gt, ct, Jt = nlp.eval_all(p, xt)
            if np.isfinite(ft) and _merit(ft, ct, mu) <= phi0 + 1e-4 * alpha * D + 1e-14 * abs(phi0):
                accepted = True
                break
            if alpha == 1.0 and not tried_soc and working:
                tried_soc = True
                A = J[working]
                try:
                    dc = -A.T @ np.linalg.solve(A @ A.T, ct[working])
                except np.linalg.LinAlgError:
                    dc = None
                if dc is not None:
                    xs = x + d + dc
                    fs, gs, cs, Js = nlp.eval_all(p, xs)
                    if np.isfinite(fs) and _merit(fs, cs, mu) <= phi0 + 1e-4 * D + 1e-14 * abs(phi0):
                        xt, ft, gt, ct, Jt = xs, fs, gs, cs, Js
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            # fall back to a fresh Hessian model once before giving up
            B_new = _initial_hessian(nlp, p, x, lam_qp)
            if np.allclose(B_new, B):
                logger.debug("line search failed in %s at iteration %d", nlp.name, it)
                lam = lam_qp
                break
            B = B_new
            continue
        s = xt - x
        y = (gt + Jt.T @ lam_qp) - (g + J.T @ lam_qp)
        if opts.hessian != "exact":
            B = _damped_bfgs(B, s, y)
        x, f, g, c, J = xt, ft, gt, ct, Jt
        lam = lam_qp
        # the QP multipliers often certify the new iterate already
        res_new = kkt_residual(g, c, J, lam)
        if res_new <= opts.kkt_tol and np.max(c, initial=0.0) <= opts.feas_tol:
            return _finish(nlp, p, x, lam, working, SolveStatus.CONVERGED, it, f, c, g, J, res_new)
        if np.max(c, initial=0.0) <= opts.feas_tol and (best is None or f <= best[1]):
            best = (x, f, g, c, J, lam)
    if best is not None and np.max(c, initial=0.0) > opts.feas_tol:
        x, f, g, c, J, lam = best
        last_res = None
    return _finish(nlp, p, x, lam, working, SolveStatus.MAX_ITER, it, f, c, g, J, last_res)


def _restore(nlp, p, x, opts):
    c = nlp.eval_all(p, x)[2]
    z0 = np.concatenate([x, [max(float(np.max(c, initial=0.0)), 0.0) + 1.0]])
    rnlp = _restoration_nlp(nlp, x)
    rsol = solve(rnlp, p, warm_start=z0, options=opts, _restoring=True)
    u = rsol.u_star[: nlp.n_dec]
    viol = float(np.max(nlp.eval_all(p, u)[2], initial=0.0))
    return u, viol <= opts.feas_tol


def _finish(nlp, p, x, lam, working, status, it, f, c, g, J, res=None):
    if res is None:
        res = kkt_residual(g, c, J, lam)
    act_tol = DEFAULT_OPTIONS.act_tol
    return NlpSolution(
        u_star=np.array(x),
        lambda_star=np.array(lam),
        active_set=np.abs(c) <= act_tol,
        kkt_residual=float(res),
        status=status,
        objective=float(f),
        iterations=it,
        constraint_values=np.array(c),
        working_set=list(working or []),
    )


# ---------------------------------------------------------------- sensitivity


def _lagrangian_grad(nlp, p, u, lam):
    _, g, _, J = nlp.eval_all(p, u)
    return g + J.T @ lam


def _fd_columns(fun, x, rel_step=1e-5):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * h))
    return np.stack(cols, axis=-1) if cols else np.zeros((0, 0))


def lagrangian_second_derivatives(nlp: ParametricNlp, p, u, lam):
    """Return ``(d2L/du2, d2L/du dp, dH/dp)`` at a primal-dual point."""
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    if nlp.lagrangian_hessian is not None:
        W = np.asarray(nlp.lagrangian_hessian(p, u, lam), dtype=float)
    else:
        W = _fd_columns(lambda uu: _lagrangian_grad(nlp, p, uu, lam), u)
        W = 0.5 * (W + W.T)
    if nlp.lagrangian_cross is not None:
        Wp = np.asarray(nlp.lagrangian_cross(p, u, lam), dtype=float)
    else:
        Wp = _fd_columns(lambda pp: _lagrangian_grad(nlp, pp, u, lam), p)
    if nlp.constraints_param_jac is not None:
        Hp = np.asarray(nlp.constraints_param_jac(p, u), dtype=float)
    else:
        Hp = _fd_columns(lambda pp: np.asarray(nlp.constraints(pp, u), dtype=float), p)
    return W, Wp.reshape(nlp.n_dec, nlp.n_par), Hp.reshape(nlp.n_con, nlp.n_par)


def kkt_sensitivity(
    nlp: ParametricNlp,
    sol: NlpSolution,
    params,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> np.ndarray:
    """Derivative of the primal solution with respect to the parameters.

    The active set of ``sol`` is held fixed and the linearized KKT system is
    solved for ``du*/dp`` (shape ``(n_dec, n_par)``).

    Raises:
        DegenerateKkt: if ``sol`` did not converge, an active constraint has
            a multiplier below ``strict_tol`` or the active Jacobian is rank
            deficient.
    """
    if not sol.converged:
        raise DegenerateKkt(f"solution status is {sol.status.value}")
    p = np.asarray(params, dtype=float)
    u = sol.u_star
    _, _, c, J = nlp.eval_all(p, u)
    lam = sol.lambda_star
    act = np.flatnonzero(np.abs(c) <= options.act_tol)
    weak = act[lam[act] < options.strict_tol]
    if weak.size:
        raise DegenerateKkt(f"strict complementarity fails for constraints {weak.tolist()}")
    JA = J[act]
    if act.size:
        sv = np.linalg.svd(JA, compute_uv=False)
        if sv[-1] <= 1e-10 * max(sv[0], 1e-300) or act.size > nlp.n_dec:
            raise DegenerateKkt("active constraint Jacobian is rank deficient (LICQ)")
    W, Wp, Hp = lagrangian_second_derivatives(nlp, p, u, lam)
    n, k = nlp.n_dec, act.size
    K = np.zeros((n + k, n + k))
    K[:n, :n] = W
    K[:n, n:] = JA.T
    K[n:, :n] = JA
    rhs = -np.vstack([Wp, Hp[act]])
    try:
        sol_mat = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateKkt("KKT matrix is singular") from exc
    return sol_mat[:n]


def with_options(options: SolverOptions | None = None, **kw) -> SolverOptions:
    return replace(options or DEFAULT_OPTIONS, **kw)
