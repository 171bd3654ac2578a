"""Build a :class:`ParametricNlp` from JAX-traceable cost and constraint functions."""

from __future__ import annotations

from collections.abc import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .nlp_solver import ParametricNlp


def nlp_from_jax(
    cost_fn: Callable,
    cons_fn: Callable,
    n_dec: int,
    n_con: int,
    n_par: int,
    hessian_fn: Callable | None = None,
    name: str = "",
) -> ParametricNlp:
    """Compile ``cost_fn(p, u)`` and ``cons_fn(p, u)`` into a ParametricNlp.

    All first and second derivatives come from JAX and are jitted. The fused
    ``evaluate`` returns cost, gradient, constraints and Jacobian in one
    device call (the inner loop of the SQP solver).

    Args:
        hessian_fn: Optional ``(p, u, lam) -> B`` used to seed the quasi-Newton
            matrix instead of the exact Lagrangian Hessian.
    """

    def lagr(p, u, lam):
        return cost_fn(p, u) + jnp.dot(lam, cons_fn(p, u))

    grad_f = jax.grad(cost_fn, argnums=1)
    jac_c = jax.jacfwd(cons_fn, argnums=1)

    @jax.jit
    def fused(p, u):
        return cost_fn(p, u), grad_f(p, u), cons_fn(p, u), jac_c(p, u)

    hess_l = jax.jit(jax.hessian(lagr, argnums=1))
    cross_l = jax.jit(jax.jacfwd(jax.grad(lagr, argnums=1), argnums=0))
    jac_cp = jax.jit(jax.jacfwd(cons_fn, argnums=0))
    cost_j = jax.jit(cost_fn)
    grad_j = jax.jit(grad_f)
    cons_j = jax.jit(cons_fn)
    jac_j = jax.jit(jac_c)
    batch = jax.jit(jax.vmap(cons_fn, in_axes=(None, 0)))
    seed = jax.jit(hessian_fn) if hessian_fn is not None else hess_l

    def evaluate(p, u):
        f, g, c, J = fused(p, u)
        return float(f), np.asarray(g), np.asarray(c), np.asarray(J)

    return ParametricNlp(
        n_dec=n_dec,
        n_con=n_con,
        n_par=n_par,
        cost=lambda p, u: float(cost_j(p, u)),
        cost_grad=lambda p, u: np.asarray(grad_j(p, u)),
        constraints=lambda p, u: np.asarray(cons_j(p, u)),
        constraints_jac=lambda p, u: np.asarray(jac_j(p, u)),
        hessian=lambda p, u, lam: np.asarray(seed(p, u, lam)),
        evaluate=evaluate,
        lagrangian_hessian=lambda p, u, lam: np.asarray(hess_l(p, u, lam)),
        lagrangian_cross=lambda p, u, lam: np.asarray(cross_l(p, u, lam)),
        constraints_param_jac=lambda p, u: np.asarray(jac_cp(p, u)),
        constraints_batch=lambda p, U: np.asarray(batch(p, U)),
        name=name,
    )
