"""Dense convex QP subproblem solver.

Solves

    min  1/2 x' G x + a' x
    s.t. C x <= b

for symmetric positive definite ``G`` with a dual active-set method in the
style of Goldfarb and Idnani. The method starts from the unconstrained
minimizer (or from a warm working set) and repeatedly adds the most violated
constraint while keeping the multipliers nonnegative, so it needs no feasible
starting point. Linear algebra is dense and recomputed at every step, which is
cheap at the problem sizes used by the MPC schemes in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class QpInfeasible(Exception):
    """The linear inequality system of the QP has no solution."""


@dataclass
class QpResult:
    x: np.ndarray
    lam: np.ndarray
    active: list[int] = field(default_factory=list)
    iterations: int = 0


def _regularized_inverse(G: np.ndarray) -> np.ndarray:
    n = G.shape[0]
    try:
        cf = sla.cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError("QP Hessian must be positive definite") from exc
    return sla.cho_solve(cf, np.eye(n), check_finite=False)


def _eqp(Ginv, a, C, b, idx):
    """Minimizer of the QP with constraints ``idx`` held as equalities."""
    if not idx:
        return -Ginv @ a, np.zeros(0)
    N = C[idx]
    NG = N @ Ginv
    M = NG @ N.T
    u = np.linalg.solve(M, -(b[idx] + NG @ a))
    x = -Ginv @ (a + N.T @ u)
    return x, u


def _independent_subset(C: np.ndarray, idx: list[int]) -> list[int]:
    """Rows of ``C[idx]`` that are linearly independent (pivoted QR)."""
    if not idx:
        return []
    N = C[idx]
    R, piv = sla.qr(N.T, mode="r", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return []
    rank = int(np.sum(d > 1e-10 * d[0]))
    return sorted(idx[i] for i in piv[:rank])


def solve_qp(
    G: np.ndarray,
    a: np.ndarray,
    C: np.ndarray,
    b: np.ndarray,
    working: list[int] | None = None,
    tol: float = 1e-12,
    max_iter: int | None = None,
) -> QpResult:
    """Solve a strictly convex inequality-constrained QP.

    Args:
        G: Symmetric positive definite Hessian, shape (n, n).
        a: Linear term, shape (n,).
        C: Constraint matrix, shape (m, n); rows are constraint normals.
        b: Right-hand side, shape (m,).
        working: Optional warm working set (constraint indices) taken as a
            starting guess for the optimal active set.
        tol: Absolute feasibility tolerance, scaled by ``max(1, |b|_inf)``.
        max_iter: Cap on add/drop steps; defaults to ``10 * (n + m) + 10``.

    Returns:
        QpResult with primal solution, full multiplier vector (zeros for
        inactive rows) and the final active set.

    Raises:
        QpInfeasible: when the constraints are inconsistent.
    """
    G = np.asarray(G, dtype=float)
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    C = np.asarray(C, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    m = b.shape[0]
    if max_iter is None:
        max_iter = 10 * (n + m) + 10
    feas_tol = tol * max(1.0, float(np.max(np.abs(b), initial=0.0)))
    Ginv = _regularized_inverse(G)

    active: list[int] = []
    if working:
        active = _independent_subset(C, sorted(set(int(i) for i in working if 0 <= i < m)))
    x, u = _eqp(Ginv, a, C, b, active)
    # warm start: drop the most negative multiplier until dual feasible
    while active and u.min() < 0.0:
        del active[int(np.argmin(u))]
        x, u = _eqp(Ginv, a, C, b, active)
    u = list(u)

    it = 0
    while True:
        if m == 0:
            break
        viol = C @ x - b
        if active:
            viol[active] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= feas_tol:
            break
        n_p = C[p]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise RuntimeError("QP active-set iteration limit reached")
            if len(active) >= n:
                N = C[active]
                r = np.linalg.solve(N @ Ginv @ N.T, N @ Ginv @ n_p)
                z = np.zeros(n)
            elif active:
                N = C[active]
                NG = N @ Ginv
                r = np.linalg.solve(NG @ N.T, NG @ n_p)
                z = Ginv @ (n_p - N.T @ r)
            else:
                r = np.zeros(0)
                z = Ginv @ n_p
            curv = float(n_p @ z)
            ref = float(n_p @ Ginv @ n_p)
            blocking = np.flatnonzero(r > 1e-14 * (1.0 + np.abs(r).max(initial=0.0)))
            if blocking.size:
                ratios = np.asarray(u)[blocking] / r[blocking]
                k = int(np.argmin(ratios))
                t2 = float(ratios[k])
                j_block = int(blocking[k])
            else:
                t2 = np.inf
                j_block = -1
            if curv <= 1e-11 * max(ref, 1e-300):
                # normal of p is dependent on the active normals
                if j_block < 0:
                    raise QpInfeasible(f"constraint {p} cannot be satisfied")
                uu = np.asarray(u) - t2 * r
                u_p += t2
                del active[j_block]
                uu = np.delete(uu, j_block)
                u = list(uu)
                continue
            t1 = float(C[p] @ x - b[p]) / curv
            t = min(t1, t2)
            x = x - t * z
            if active:
                u = list(np.asarray(u) - t * r)
            u_p += t
            if t1 <= t2:
                active.append(p)
                u.append(u_p)
                break
            del active[j_block]
            del u[j_block]

    # polish: recompute the solution exactly for the final active set
    if active:
        x_pol, u_pol = _eqp(Ginv, a, C, b, active)
        if u_pol.min() >= -1e-10 * (1.0 + np.abs(u_pol).max()):
            x, u = x_pol, list(np.maximum(u_pol, 0.0))
    lam = np.zeros(m)
    if active:
        lam[active] = np.asarray(u)
    return QpResult(x=x, lam=lam, active=list(active), iterations=it)
