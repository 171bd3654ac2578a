"""The two scalar benchmark MDPs and their MPC schemes."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from .mpc import MpcSpec


@dataclass(frozen=True, eq=False)
class Mdp:
    """MDP with additive, pre-drawn noise so rollouts can share random numbers.

    ``step(s, a, d)`` is deterministic; ``sample_noise(rng, shape)`` draws
    the disturbances ``d`` (all zeros for deterministic systems).
    """

    n: int
    m: int
    gamma: float
    step: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    stage_cost: Callable[[np.ndarray, np.ndarray], float]
    sample_noise: Callable[[np.random.Generator, tuple], np.ndarray]
    initial_state: Callable[[np.random.Generator], np.ndarray]
    initial_state_desc: str = ""
    deterministic: bool = False
    name: str = "mdp"

    def L(self, s, a) -> float:
        return float(self.stage_cost(np.asarray(s, dtype=float), np.asarray(a, dtype=float)))


def _no_noise(n):
    def sample(rng, shape):
        return np.zeros(tuple(shape) + (n,))
    return sample


def example1(N: int = 20, terminal_constraint: bool = True, gamma: float = 0.9,
             s0_low: float = -1.0, s0_high: float = 1.0) -> tuple[Mdp, MpcSpec]:
    """Deterministic integrator ``s+ = s + a`` with ``s^2 + 5 a^2 <= 1``.

    The MPC uses the parametrized stage cost ``theta x^2 + u^2`` and terminal
    cost ``x_N^2``. With ``terminal_constraint`` the stage constraint at zero
    input, ``x_N^2 - 1 <= 0``, is imposed on the terminal state.
    """

    def step(s, a, d):
        return np.asarray(s, dtype=float) + np.asarray(a, dtype=float) + d

    def L(s, a):
        return float(s @ s + a @ a)

    mdp = Mdp(
        n=1, m=1, gamma=gamma, step=step, stage_cost=L, sample_noise=_no_noise(1),
        initial_state=lambda rng: rng.uniform(s0_low, s0_high, size=1),
        initial_state_desc=f"uniform[{s0_low}, {s0_high}]",
        deterministic=True, name="example1",
    )
    spec = MpcSpec(
        n=1, m=1, N=N, gamma=gamma, theta_dim=1,
        dynamics=lambda x, u, th: x + u,
        stage_cost=lambda x, u, th: th[0] * jnp.sum(x**2) + jnp.sum(u**2),
        terminal_cost=lambda x, th: jnp.sum(x**2),
        stage_constraints=lambda x, u, th: jnp.atleast_1d(x[0] ** 2 + 5.0 * u[0] ** 2 - 1.0),
        terminal_constraints=lambda x, th: jnp.atleast_1d(x[0] ** 2 - 1.0),
        n_h=1,
        n_hf=1 if terminal_constraint else 0,
        name=f"example1(N={N})",
    )
    return mdp, spec


def u_ref(theta):
    return 0.2 - theta


def example2(N_stages: int = 51, noise: float = 1e-3, gamma: float = 0.9, s0: float = 0.0) -> tuple[Mdp, MpcSpec]:
    """Noisy linear system ``s+ = 0.97 s + 0.1 a + d`` with ``d ~ U(-noise, noise)``.

    The MPC runs over ``N_stages`` inputs (``k = 0..N_stages-1``) with stage
    cost ``10 (x - 1/3)^2 + (u - u_ref(theta))^2``, bound ``u <= theta`` and
    no terminal cost or constraint.
    """

    def step(s, a, d):
        return 0.97 * np.asarray(s, dtype=float) + 0.1 * np.asarray(a, dtype=float) + d

    def L(s, a):
        return float(20.0 * (s[0] - 0.5) ** 2 + (a[0] - 2.0) ** 2)

    def sample_noise(rng, shape):
        return rng.uniform(-noise, noise, size=tuple(shape) + (1,))

    mdp = Mdp(
        n=1, m=1, gamma=gamma, step=step, stage_cost=L, sample_noise=sample_noise,
        initial_state=lambda rng: np.array([s0]), initial_state_desc=f"fixed {s0}",
        deterministic=noise == 0.0, name="example2",
    )
    spec = MpcSpec(
        n=1, m=1, N=N_stages, gamma=gamma, theta_dim=1,
        dynamics=lambda x, u, th: 0.97 * x + 0.1 * u,
        stage_cost=lambda x, u, th: 10.0 * (x[0] - 1.0 / 3.0) ** 2 + (u[0] - u_ref(th[0])) ** 2,
        terminal_cost=lambda x, th: 0.0 * x[0],
        stage_constraints=lambda x, u, th: jnp.atleast_1d(u[0] - th[0]),
        terminal_constraints=lambda x, th: jnp.zeros(0),
        n_h=1,
        n_hf=0,
        name=f"example2(N={N_stages})",
    )
    return mdp, spec


def closed_loop_J(
    env: Mdp,
    policy_fn: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    horizon: int = 150,
    n_rollouts: int = 1,
    s0: np.ndarray | None = None,
    noise: np.ndarray | None = None,
    initial_states: np.ndarray | None = None,
) -> tuple[float, float]:
    """Monte Carlo discounted closed-loop cost under ``policy_fn``.

    Args:
        policy_fn: Maps a state to an action. Stateful closures may use it to
            carry warm starts between steps.
        s0: Fixed initial state; otherwise drawn from ``env.initial_state``.
        noise: Optional pre-drawn disturbances, shape (n_rollouts, horizon, n),
            for common random numbers across calls.
        initial_states: Optional pre-drawn initial states, shape (n_rollouts, n).

    Returns:
        (mean, standard error) over rollouts; SE is 0 for a single rollout.
    """
    if noise is None:
        noise = env.sample_noise(rng, (n_rollouts, horizon))
    returns = np.empty(n_rollouts)
    for r in range(n_rollouts):
        if initial_states is not None:
            s = np.asarray(initial_states[r], dtype=float)
        elif s0 is not None:
            s = np.asarray(s0, dtype=float).reshape(env.n)
        else:
            s = env.initial_state(rng)
        total, disc = 0.0, 1.0
        for t in range(horizon):
            a = np.asarray(policy_fn(s), dtype=float).reshape(env.m)
            total += disc * env.L(s, a)
            s = env.step(s, a, noise[r, t])
            disc *= env.gamma
        returns[r] = total
    se = float(returns.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return float(returns.mean()), se
