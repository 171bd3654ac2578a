"""Grid value iteration for the scalar constrained benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DpSolution:
    s_grid: np.ndarray
    value: np.ndarray
    policy: np.ndarray
    iterations: int
    bellman_residual: float

    def policy_at(self, s) -> np.ndarray:
        return np.interp(s, self.s_grid, self.policy)


def example1_action_bounds(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Input interval keeping ``s^2 + 5 a^2 <= 1`` and the successor in [-1, 1]."""
    r = np.sqrt(np.maximum(1.0 - s**2, 0.0) / 5.0)
    return np.maximum(-r, -1.0 - s), np.minimum(r, 1.0 - s)


def value_iteration_example1(
    n_states: int = 401,
    n_actions: int = 401,
    gamma: float = 0.9,
    tol: float = 1e-9,
    max_iter: int = 10_000,
) -> DpSolution:
    """Optimal discounted policy of ``s+ = s + a`` with cost ``s^2 + a^2``.

    Each state gets its own uniform action grid over the admissible
    interval, so every candidate action is feasible. The successor value is
    linearly interpolated on the state grid.

    Raises:
        RuntimeError: if the Bellman residual does not reach ``tol``.
    """
    s = np.linspace(-1.0, 1.0, n_states)
    lo, hi = example1_action_bounds(s)
    frac = np.linspace(0.0, 1.0, n_actions)
    A = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    S_next = np.clip(s[:, None] + A, -1.0, 1.0)
    stage = s[:, None] ** 2 + A**2
    V = np.zeros(n_states)
    res = np.inf
    for it in range(1, max_iter + 1):
        Q = stage + gamma * np.interp(S_next, s, V)
        V_new = Q.min(axis=1)
        res = float(np.max(np.abs(V_new - V)))
        V = V_new
        if res <= tol:
            break
    else:
        raise RuntimeError(f"value iteration stalled at residual {res:.3g}")
    Q = stage + gamma * np.interp(S_next, s, V)
    pol = A[np.arange(n_states), Q.argmin(axis=1)]
    return DpSolution(s_grid=s, value=V, policy=pol, iterations=it, bellman_residual=res)
