"""First-input trajectory sensitivities ``S_k = dx_k / du_0``."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .mpc import MpcSpec


@dataclass
class TrajectorySensitivities:
    S: np.ndarray  # (N + 1, n, m)
    x_traj: np.ndarray
    u_profile: np.ndarray


def sensitivity_scan(spec: MpcSpec, x0, U, theta):
    """JAX recursion ``S_0 = 0``, ``S_1 = f_u``, ``S_k = f_x S_(k-1)``.

    Returns the states (N + 1, n) and sensitivities (N + 1, n, m) along the
    single-shooting trajectory from ``x0`` under inputs ``U``.
    """
    fx = jax.jacfwd(spec.dynamics, argnums=0)
    fu = jax.jacfwd(spec.dynamics, argnums=1)

    def step(carry, inp):
        x, S = carry
        k, u = inp
        S_next = jnp.where(k == 0, fu(x, u, theta), fx(x, u, theta) @ S)
        x_next = spec.dynamics(x, u, theta)
        return (x_next, S_next), (x_next, S_next)

    S0 = jnp.zeros((spec.n, spec.m))
    _, (xs, Ss) = jax.lax.scan(step, (x0, S0), (jnp.arange(spec.N), U))
    X = jnp.concatenate([x0[None], xs], axis=0)
    S = jnp.concatenate([S0[None], Ss], axis=0)
    return X, S


@functools.lru_cache(maxsize=None)
def _scan_jit(spec: MpcSpec):
    return jax.jit(lambda x0, U, th: sensitivity_scan(spec, x0, U, th))


def propagate(spec: MpcSpec, x_traj, u_profile, theta=None) -> TrajectorySensitivities:
    """Sensitivities along a given trajectory.

    The Jacobians are evaluated on ``x_traj`` itself, which must be
    consistent with ``u_profile`` under the model dynamics.
    """
    U = np.asarray(u_profile, dtype=float).reshape(-1, spec.m)
    X = np.asarray(x_traj, dtype=float).reshape(-1, spec.n)
    if U.shape[0] != spec.N or X.shape[0] != spec.N + 1:
        raise ValueError(f"expected {spec.N} inputs and {spec.N + 1} states, got {U.shape[0]} and {X.shape[0]}")
    th = np.zeros(spec.theta_dim) if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    Xj, S = _scan_jit(spec)(jnp.asarray(X[0]), jnp.asarray(U), jnp.asarray(th))
    if not np.allclose(np.asarray(Xj), X, atol=1e-9, rtol=1e-9):
        raise ValueError("x_traj is not consistent with u_profile under the dynamics")
    return TrajectorySensitivities(S=np.asarray(S), x_traj=X, u_profile=U)
