"""Robustified MPC with first-order constraint tightening against input exploration.

The robust scheme adds the exploration radius ``nu in [0, eta_bar]`` as a
decision variable rewarded by ``-w * nu``, and backs off each constraint row
by ``nu`` times the norm of its derivative with respect to ``u_0``:

* stage 0:   ``h_i(x_0, u_0) + |dh_i/du_0| nu <= 0``
* stage k:   ``h_i(x_k, u_k) + |(dh/dx_k S_k)_i| nu <= 0``
* terminal:  ``hf_i(x_N) + |(dhf/dx_N S_N)_i| nu <= 0``

so that any ``u_0 + e`` with ``|e| <= nu`` keeps the constraints satisfied
to first order. ``S_k = dx_k/du_0`` is recomputed from the current iterate.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .jaxnlp import nlp_from_jax
from .mpc import (
    MpcSpec,
    PolicyEval,
    _mpc_cost,
    _mpc_constraints,
    first_input_sensitivity,
    policy,
    simulate,
    solve_checked,
)
from .nlp_solver import DEFAULT_OPTIONS, ParametricNlp, SolverOptions
from .sensitivity import sensitivity_scan


@dataclass(frozen=True)
class RmpcConfig:
    eta_bar: float = 0.05
    slack_weight: float = 1e3
    norm_smoothing: float = 1e-9
    tighten_terminal: bool = True

    def __post_init__(self):
        if self.eta_bar < 0.0 or self.slack_weight <= 0.0 or self.norm_smoothing < 0.0:
            raise ValueError(f"invalid RmpcConfig {self}")


def smooth_norm(z, delta):
    """``sqrt(|z|^2 + delta^2) - delta`` along the last axis."""
    return jnp.sqrt(jnp.sum(z * z, axis=-1) + delta * delta) - delta


def tightening_factors(spec: MpcSpec, X, U, S, theta, delta: float, tighten_terminal: bool):
    """Row norms of ``dH/du_0`` for the stacked stage and terminal constraints."""
    hx = jax.vmap(jax.jacfwd(lambda x, u: spec.stage_constraints(x, u, theta), argnums=0))(X[:-1], U)
    hu = jax.jacfwd(lambda u: spec.stage_constraints(X[0], u, theta))(U[0])
    D = jnp.einsum("kin,knm->kim", hx, S[:-1])  # (N, n_h, m)
    D = D.at[0].add(hu)
    fac = smooth_norm(D, delta).reshape(-1)
    if spec.n_hf:
        if tighten_terminal:
            hfx = jax.jacfwd(lambda x: spec.terminal_constraints(x, theta))(X[-1])
            fac_f = smooth_norm(hfx @ S[-1], delta)
        else:
            fac_f = jnp.zeros(spec.n_hf)
        fac = jnp.concatenate([fac, fac_f])
    return fac


@functools.lru_cache(maxsize=None)
def compile_robust(spec: MpcSpec, cfg: RmpcConfig) -> ParametricNlp:
    """Single-shooting robust NLP in ``z = (u, nu)``, parameters ``(s, theta)``.

    Constraint order: stage rows, terminal rows, ``-nu <= 0``, ``nu - eta_bar <= 0``.
    """
    nu_idx = spec.n_dec
    w, eta_bar, delta = cfg.slack_weight, cfg.eta_bar, cfg.norm_smoothing

    def unpack(p, z):
        s, th = p[: spec.n], p[spec.n :]
        U = z[:nu_idx].reshape(spec.N, spec.m)
        return s, th, U, z[nu_idx]

    def cost(p, z):
        s, th, U, nu = unpack(p, z)
        X, _ = sensitivity_scan(spec, s, U, th)
        return -w * nu + _mpc_cost(spec, X, U, th)

    def cons(p, z):
        s, th, U, nu = unpack(p, z)
        X, S = sensitivity_scan(spec, s, U, th)
        H = _mpc_constraints(spec, X, U, th)
        fac = tightening_factors(spec, X, U, S, th, delta, cfg.tighten_terminal)
        return jnp.concatenate([H + fac * nu, jnp.stack([-nu, nu - eta_bar])])

    def lagr(p, z, lam):
        return cost(p, z) + jnp.dot(lam, cons(p, z))

    hess = jax.hessian(lagr, argnums=1)
    # curvature on nu so the unconstrained QP step in nu has size eta_bar
    nu_curv = w / eta_bar if eta_bar > 0.0 else w

    def seed(p, z, lam):
        return hess(p, z, lam).at[nu_idx, nu_idx].add(nu_curv)

    n_con = spec.N * spec.n_h + spec.n_hf + 2
    return nlp_from_jax(cost, cons, spec.n_dec + 1, n_con, spec.n + spec.theta_dim,
                        hessian_fn=seed, name=f"robust({spec.name}, eta_bar={eta_bar})")


def robust_policy(
    spec: MpcSpec,
    cfg: RmpcConfig,
    s,
    theta,
    warm=None,
    options: SolverOptions = DEFAULT_OPTIONS,
    with_sensitivity: bool = True,
) -> PolicyEval:
    """Robust MPC policy ``pi_hat_theta(s)`` and the solved radius ``eta``.

    With ``eta_bar = 0`` the robust and nominal schemes coincide and the
    nominal policy is returned (``eta = 0``).

    Raises:
        InfeasibleState: if the nominal problem is infeasible at ``s``.
    """
    if cfg.eta_bar == 0.0:
        return policy(spec, s, theta, warm=warm, options=options, with_sensitivity=with_sensitivity)
    nlp = compile_robust(spec, cfg)
    p = spec.params(s, theta)
    if warm is None:
        warm = np.zeros(nlp.n_dec)
    sol = solve_checked(nlp, p, warm=warm, options=options)
    U = sol.u_star[: spec.n_dec].reshape(spec.N, spec.m)
    eta = float(np.clip(sol.u_star[spec.n_dec], 0.0, cfg.eta_bar))
    dpi, method = (None, "none")
    if with_sensitivity:
        dpi, method = first_input_sensitivity(nlp, sol, p, spec.n, spec.m, options)
    return PolicyEval(
        u0=U[0].copy(),
        u_profile=U.copy(),
        x_traj=simulate(spec, p[: spec.n], U, p[spec.n :]),
        eta=eta,
        dpi_dtheta=dpi,
        objective=sol.objective + cfg.slack_weight * float(sol.u_star[spec.n_dec]),
        solution=sol,
        sensitivity_method=method,
    )
