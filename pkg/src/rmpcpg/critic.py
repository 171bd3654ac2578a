"""Rescaled compatible advantage critic fitted by weighted least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .envs import Mdp
from .mpc import MpcSpec, PolicyEval
from .nlp_solver import DEFAULT_OPTIONS, SolverOptions
from .rmpc import RmpcConfig
from .rollouts import PolicyRunner, discounted_return

GRAM_COND_MAX = 1e12


class RankDeficient(Exception):
    """The critic design matrix does not determine the parameters."""


@dataclass
class CriticSample:
    s: np.ndarray
    e_perp: np.ndarray
    eta: float
    dpi_dtheta: np.ndarray  # (theta_dim, m)
    q_est: float
    v_est: float
    weight: float = 1.0
    episode: int = 0

    @property
    def target(self) -> float:
        return self.q_est - self.v_est


@dataclass
class AdvantageModel:
    """``A(s, a_perp) = (eta_bar^2 / eta^2) * w_critic^T dpi_dtheta (a_perp - pi_hat)``."""

    w_critic: np.ndarray
    eta_bar: float

    def scale(self, eta: float) -> float:
        return self.eta_bar**2 / eta**2

    def advantage(self, dpi_dtheta, e_perp, eta: float) -> float:
        return self.scale(eta) * float(self.w_critic @ (np.asarray(dpi_dtheta) @ np.asarray(e_perp)))

    def action_gradient(self, dpi_dtheta, eta: float) -> np.ndarray:
        """``grad_a A`` (independent of the action for this linear model)."""
        return self.scale(eta) * (np.asarray(dpi_dtheta).T @ self.w_critic)


def features(samples: list[CriticSample], eta_bar: float) -> np.ndarray:
    """Rows ``(eta_bar^2 / eta^2) dpi_dtheta e_perp`` of the regression."""
    return np.array([(eta_bar**2 / c.eta**2) * (np.asarray(c.dpi_dtheta) @ np.asarray(c.e_perp)) for c in samples])


def fit(samples: list[CriticSample], eta_bar: float) -> AdvantageModel:
    """Weighted least-squares fit of the critic parameters.

    Minimizes ``sum_i weight_i (Q_i - V_i - A(s_i, a_perp_i))^2 / eta_bar^2``.
    Samples with ``eta = 0`` carry no information and are dropped.

    Raises:
        RankDeficient: if the weighted Gram matrix is numerically singular.
    """
    samples = [c for c in samples if c.eta > 0.0]
    if not samples:
        raise RankDeficient("no samples with positive exploration radius")
    Phi = features(samples, eta_bar)
    y = np.array([c.target for c in samples])
    sw = np.sqrt(np.array([c.weight for c in samples]))
    A = Phi * sw[:, None]
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[-1] == 0.0 or (sv[0] / sv[-1]) ** 2 > GRAM_COND_MAX:
        raise RankDeficient(f"Gram matrix condition number exceeds {GRAM_COND_MAX:.0e}")
    w, *_ = sla.lstsq(A, y * sw, lapack_driver="gelsy")
    return AdvantageModel(w_critic=np.asarray(w), eta_bar=eta_bar)


def stationarity_residual(model: AdvantageModel, samples: list[CriticSample]) -> float:
    """Relative size of the weighted normal-equation residual at the fitted model.

    Returns ``|sum_i weight_i phi_i r_i| / sum_i weight_i |phi_i| |y_i|`` with
    ``r_i = y_i - A_i``; zero targets give zero.
    """
    samples = [c for c in samples if c.eta > 0.0]
    Phi = features(samples, model.eta_bar)
    y = np.array([c.target for c in samples])
    wt = np.array([c.weight for c in samples])
    r = y - Phi @ model.w_critic
    num = np.linalg.norm((wt * r) @ Phi)
    den = float(np.sum(wt * np.linalg.norm(Phi, axis=1) * np.abs(y)))
    return float(num / den) if den > 0.0 else float(num)


def estimate_q(
    env: Mdp,
    spec: MpcSpec,
    cfg: RmpcConfig | None,
    s,
    theta,
    a0,
    rollout_horizon: int = 150,
    n_rollouts: int = 1,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
    start: PolicyEval | None = None,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> float:
    """Monte Carlo action value of ``a0`` at ``s`` under the (robust) policy.

    Pass the same ``noise`` (shape (n_rollouts, rollout_horizon, n)) to
    paired calls to obtain common random numbers.
    """
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise is required")
        noise = env.sample_noise(rng, (n_rollouts, rollout_horizon))
    runner = PolicyRunner(spec, cfg, theta, options=options)
    vals = [discounted_return(env, runner, s, noise[r], a0=a0, start=start) for r in range(noise.shape[0])]
    return float(np.mean(vals))
