"""Closed-loop simulation under nominal or robust MPC policies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import Mdp
from .mpc import MpcSpec, PolicyEval, policy, shifted
from .nlp_solver import DEFAULT_OPTIONS, SolverOptions
from .rmpc import RmpcConfig, robust_policy


@dataclass
class PolicyRunner:
    """Evaluates ``pi_theta`` (``cfg is None``) or ``pi_hat_theta`` with warm starts.

    Each call warm-starts from the shifted profile of the previous call, which
    is the natural choice along a closed-loop trajectory.
    """

    spec: MpcSpec
    cfg: RmpcConfig | None
    theta: np.ndarray
    options: SolverOptions = DEFAULT_OPTIONS
    last: PolicyEval | None = field(default=None, repr=False)

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))

    @property
    def robust(self) -> bool:
        return self.cfg is not None

    def evaluate(self, s, warm=None, with_sensitivity: bool = False) -> PolicyEval:
        if warm is None and self.last is not None:
            warm = shifted(self.last, self.spec.m)
        if self.cfg is None:
            pe = policy(self.spec, s, self.theta, warm=warm, options=self.options,
                        with_sensitivity=with_sensitivity)
        else:
            pe = robust_policy(self.spec, self.cfg, s, self.theta, warm=warm, options=self.options,
                               with_sensitivity=with_sensitivity)
        self.last = pe
        return pe

    def __call__(self, s) -> np.ndarray:
        return self.evaluate(s).u0

    def reset(self, warm: PolicyEval | None = None) -> "PolicyRunner":
        self.last = warm
        return self


def discounted_return(
    env: Mdp,
    runner: PolicyRunner,
    s,
    noise: np.ndarray,
    a0=None,
    start: PolicyEval | None = None,
) -> float:
    """``sum_t gamma^t L(s_t, a_t)`` over ``len(noise)`` steps.

    ``a0`` overrides the first action; the policy is followed afterwards.
    ``start`` (the policy evaluation at ``s``) seeds the warm starts.
    """
    s = np.asarray(s, dtype=float).reshape(env.n)
    runner.reset(start)
    total, disc = 0.0, 1.0
    for t in range(noise.shape[0]):
        if t == 0 and a0 is not None:
            a = np.asarray(a0, dtype=float).reshape(env.m)
        elif t == 0 and start is not None:
            a = start.u0
        else:
            a = runner(s)
        total += disc * env.L(s, a)
        s = env.step(s, a, noise[t])
        disc *= env.gamma
    return total
