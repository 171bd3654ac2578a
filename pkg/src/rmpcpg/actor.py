"""Policy-gradient assembly, finite-difference oracle and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .critic import AdvantageModel, CriticSample, RankDeficient, fit, stationarity_residual
from .envs import Mdp, closed_loop_J
from .exploration import Streams, ball_draws
from .mpc import InfeasibleState, MpcSpec
from .nlp_solver import DEFAULT_OPTIONS, SolverOptions
from .projection import explore_many
from .rmpc import RmpcConfig
from .rollouts import PolicyRunner, discounted_return

logger = logging.getLogger(__name__)


class EmptyBatch(Exception):
    """No visited states to average over."""


@dataclass
class VisitedState:
    s: np.ndarray
    dpi_dtheta: np.ndarray
    eta: float
    weight: float = 1.0


@dataclass
class GradientEstimate:
    grad: np.ndarray
    n_states: int
    diagnostics: dict = field(default_factory=dict)


def estimate_gradient(model: AdvantageModel, visited: list, scale: float = 1.0) -> GradientEstimate:
    """``scale * mean_i weight_i * dpi_dtheta_i grad_a A(s_i, pi_hat(s_i))``.

    Args:
        visited: VisitedState or CriticSample entries.
        scale: Converts the weighted sample mean into a discounted sum
            (e.g. ``1 / (1 - gamma)`` for geometric restarts).
    """
    if not visited:
        raise EmptyBatch("no visited states")
    terms = []
    conds = []
    for v in visited:
        dpi = np.asarray(v.dpi_dtheta, dtype=float)
        terms.append(v.weight * (dpi @ model.action_gradient(dpi, v.eta)))
        conds.append(float(np.linalg.norm(dpi)))
    grad = scale * np.mean(terms, axis=0)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient estimate")
    return GradientEstimate(grad=grad, n_states=len(visited),
                            diagnostics={"dpi_norm_min": min(conds), "dpi_norm_max": max(conds)})


# ---------------------------------------------------------------- oracle


@dataclass
class FdGradient:
    grad: np.ndarray
    se: np.ndarray
    delta: float
    J: float
    J_se: float


def _policy_fn(spec, cfg, theta, options):
    return PolicyRunner(spec, cfg, theta, options=options)


def true_gradient_fd(
    env: Mdp,
    spec: MpcSpec,
    cfg: RmpcConfig | None,
    theta,
    delta: float = 1e-3,
    horizon: int = 150,
    n_rollouts: int = 8,
    rng: np.random.Generator | None = None,
    options: SolverOptions = DEFAULT_OPTIONS,
    s0=None,
) -> FdGradient:
    """Central difference of the closed-loop cost with common random numbers.

    The same disturbances and initial states are used at ``theta +- delta``
    in every coordinate; the standard error is that of the per-rollout
    differences.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    rng = rng if rng is not None else np.random.default_rng(0)
    noise = env.sample_noise(rng, (n_rollouts, horizon))
    if s0 is not None:
        starts = np.broadcast_to(np.asarray(s0, dtype=float).reshape(env.n), (n_rollouts, env.n)).copy()
    else:
        starts = np.array([env.initial_state(rng) for _ in range(n_rollouts)])

    def per_rollout(th):
        runner = _policy_fn(spec, cfg, th, options)
        return np.array([discounted_return(env, runner.reset(), starts[r], noise[r]) for r in range(n_rollouts)])

    base = per_rollout(theta)
    grad = np.zeros(theta.size)
    se = np.zeros(theta.size)
    for j in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += delta
        tm[j] -= delta
        d = (per_rollout(tp) - per_rollout(tm)) / (2.0 * delta)
        grad[j] = d.mean()
        se[j] = d.std(ddof=1) / np.sqrt(n_rollouts) if n_rollouts > 1 else 0.0
    J_se = float(base.std(ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return FdGradient(grad=grad, se=se, delta=delta, J=float(base.mean()), J_se=J_se)


@dataclass
class RichardsonCheck:
    coarse: FdGradient
    fine: FdGradient
    finest: FdGradient

    @property
    def extrapolated(self) -> np.ndarray:
        return (4.0 * self.fine.grad - self.coarse.grad) / 3.0

    @property
    def differences(self) -> tuple[np.ndarray, np.ndarray]:
        return self.coarse.grad - self.fine.grad, self.fine.grad - self.finest.grad


def richardson_check(env, spec, cfg, theta, delta=1e-3, seed=0, **kw) -> RichardsonCheck:
    """Oracle at ``delta``, ``delta/2`` and ``delta/4`` on identical random numbers."""
    out = [true_gradient_fd(env, spec, cfg, theta, delta=d, rng=np.random.default_rng(seed), **kw)
           for d in (delta, delta / 2.0, delta / 4.0)]
    return RichardsonCheck(*out)


# ---------------------------------------------------------------- batch


@dataclass(frozen=True)
class BatchConfig:
    """Closed-loop sample collection.

    ``mode = "geometric"`` restarts each trajectory with probability
    ``1 - gamma`` after every step, so visited states follow the normalized
    discounted occupancy and the gradient is ``mean / (1 - gamma)``.
    ``mode = "fixed"`` runs ``n_trajectories`` of ``episode_length`` steps and
    weights step ``t`` by ``gamma^t``.
    """

    mode: str = "geometric"
    n_samples: int = 300
    n_trajectories: int = 10
    episode_length: int = 30
    rollout_horizon: int = 150
    n_rollouts: int = 1


@dataclass
class Batch:
    samples: list[CriticSample]
    scale: float
    n_episodes: int


def collect_batch(
    env: Mdp,
    spec: MpcSpec,
    cfg: RmpcConfig | None,
    theta,
    eta_bar: float,
    batch: BatchConfig,
    streams: Streams,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> Batch:
    """Closed-loop transitions with projected exploration and MC critic targets.

    With ``cfg = None`` exploration of radius ``eta_bar`` is applied around the
    nominal policy and projected on the nominal feasible set. Otherwise the
    robust policy is used with its solved radius. Q and V estimates of each
    sample share their disturbance sequence.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    gamma = env.gamma
    samples: list[CriticSample] = []
    runner = PolicyRunner(spec, cfg, theta, options=options)
    rollout_runner = PolicyRunner(spec, cfg, theta, options=options)
    if batch.mode == "geometric":
        total = batch.n_samples
        scale = 1.0 / (1.0 - gamma)
    elif batch.mode == "fixed":
        total = batch.n_trajectories * batch.episode_length
        scale = float(batch.episode_length)
    else:
        raise ValueError(f"unknown batch mode {batch.mode!r}")
    ep = 0
    while len(samples) < total:
        rng = streams.rng("episode", ep)
        s = np.asarray(env.initial_state(rng), dtype=float).reshape(env.n)
        runner.reset()
        t = 0
        while len(samples) < total:
            pe = runner.evaluate(s, with_sensitivity=True)
            eta = pe.eta if cfg is not None else eta_bar
            k = len(samples)
            srng = streams.rng("sample", ep, t)
            e = ball_draws(spec.m, eta, srng, 1)
            res = explore_many(spec, s, theta, pe, e, options=options)[0]
            noise = env.sample_noise(srng, (batch.n_rollouts, batch.rollout_horizon))
            q = np.mean([discounted_return(env, rollout_runner, s, noise[r], a0=res.a_perp, start=pe)
                         for r in range(batch.n_rollouts)])
            v = np.mean([discounted_return(env, rollout_runner, s, noise[r], start=pe)
                         for r in range(batch.n_rollouts)])
            weight = gamma**t if batch.mode == "fixed" else 1.0
            if eta > 0.0:
                samples.append(CriticSample(s=s.copy(), e_perp=res.e_perp.copy(), eta=eta,
                                            dpi_dtheta=pe.dpi_dtheta.copy(), q_est=float(q), v_est=float(v),
                                            weight=weight, episode=ep))
            d = env.sample_noise(srng, (1,))[0]
            s = env.step(s, res.a_perp, d)
            t += 1
            if batch.mode == "fixed" and t >= batch.episode_length:
                break
            if batch.mode == "geometric" and srng.random() > gamma:
                break
            if len(samples) == k and eta == 0.0 and t > 10 * batch.rollout_horizon:
                raise RankDeficient("trajectory stuck at zero exploration radius")
        ep += 1
    return Batch(samples=samples, scale=scale, n_episodes=ep)


@dataclass
class BatchGradient:
    grad: np.ndarray
    se: np.ndarray
    model: AdvantageModel
    residual: float
    n_samples: int


def batch_gradient(batch: Batch, eta_bar: float) -> BatchGradient:
    """Fit the critic, assemble the gradient and a jackknife-over-episodes SE."""
    model = fit(batch.samples, eta_bar)
    g = estimate_gradient(model, batch.samples, scale=batch.scale).grad
    episodes = sorted({c.episode for c in batch.samples})
    se = np.full_like(g, np.nan)
    if len(episodes) >= 2:
        loo = []
        for e in episodes:
            sub = [c for c in batch.samples if c.episode != e]
            try:
                loo.append(estimate_gradient(fit(sub, eta_bar), sub, scale=batch.scale).grad)
            except RankDeficient:
                continue
        loo = np.array(loo)
        n = loo.shape[0]
        if n >= 2:
            se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return BatchGradient(grad=g, se=se, model=model,
                         residual=stationarity_residual(model, batch.samples), n_samples=len(batch.samples))


# ---------------------------------------------------------------- training


@dataclass
class IterationRecord:
    iteration: int
    theta: np.ndarray
    grad_mpc_est: np.ndarray | None
    grad_mpc_se: np.ndarray | None
    grad_rmpc_est: np.ndarray | None
    grad_rmpc_se: np.ndarray | None
    oracle_mpc: np.ndarray | None
    oracle_mpc_se: np.ndarray | None
    oracle_rmpc: np.ndarray | None
    oracle_rmpc_se: np.ndarray | None
    J_mpc: float | None
    J_rmpc: float | None
    residual_mpc: float | None = None
    residual_rmpc: float | None = None


@dataclass
class TrainingTrace:
    records: list[IterationRecord] = field(default_factory=list)
    aborted: str | None = None
    error: Exception | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class OracleConfig:
    delta: float = 1e-3
    horizon: int = 150
    n_rollouts: int = 8


def train(
    env: Mdp,
    spec: MpcSpec,
    cfg: RmpcConfig,
    theta0,
    iterations: int,
    batch: BatchConfig,
    step_size: float,
    streams: Streams,
    policy_kind: str = "RMPC",
    compare: bool = True,
    oracle: OracleConfig | None = OracleConfig(),
    s0=None,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> TrainingTrace:
    """Actor-critic gradient descent on ``theta``.

    Each iteration collects a batch, fits the critic and updates
    ``theta <- theta - step_size * grad`` with the estimate of
    ``policy_kind`` ("RMPC" or "MPC"). With ``compare`` the other kind's
    estimate is recorded at the same ``theta``. When ``oracle`` is given the
    finite-difference gradients of both policies are recorded as well.
    Infeasibility or a rank-deficient critic stops training and the partial
    trace is returned.
    """
    if policy_kind not in ("RMPC", "MPC"):
        raise ValueError(f"policy_kind must be RMPC or MPC, got {policy_kind!r}")
    theta = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    trace = TrainingTrace()
    kinds = ["RMPC", "MPC"] if compare else [policy_kind]
    for it in range(iterations):
        est: dict[str, BatchGradient] = {}
        orc: dict[str, object] = {}
        try:
            for kind in kinds:
                kcfg = cfg if kind == "RMPC" else None
                b = collect_batch(env, spec, kcfg, theta, cfg.eta_bar, batch,
                                  streams.child("batch", it), options=options)
                est[kind] = batch_gradient(b, cfg.eta_bar)
                if oracle is not None:
                    orc[kind] = true_gradient_fd(env, spec, kcfg, theta, delta=oracle.delta, horizon=oracle.horizon,
                                                 n_rollouts=oracle.n_rollouts,
                                                 rng=streams.rng("oracle", it), options=options, s0=s0)
        except (InfeasibleState, RankDeficient) as exc:
            trace.aborted = f"iteration {it}: {exc}"
            trace.error = exc
            logger.warning("training aborted: %s", trace.aborted)
            break

        def g(kind, attr):
            if kind in est:
                return getattr(est[kind], attr)
            return None

        def o(kind, attr):
            return getattr(orc[kind], attr) if kind in orc else None

        trace.records.append(IterationRecord(
            iteration=it, theta=theta.copy(),
            grad_mpc_est=g("MPC", "grad"), grad_mpc_se=g("MPC", "se"),
            grad_rmpc_est=g("RMPC", "grad"), grad_rmpc_se=g("RMPC", "se"),
            oracle_mpc=o("MPC", "grad"), oracle_mpc_se=o("MPC", "se"),
            oracle_rmpc=o("RMPC", "grad"), oracle_rmpc_se=o("RMPC", "se"),
            J_mpc=o("MPC", "J"), J_rmpc=o("RMPC", "J"),
            residual_mpc=g("MPC", "residual"), residual_rmpc=g("RMPC", "residual"),
        ))
        theta = theta - step_size * est[policy_kind].grad
    return trace


__all__ = [
    "BatchConfig", "EmptyBatch", "FdGradient", "GradientEstimate", "OracleConfig", "TrainingTrace",
    "VisitedState", "batch_gradient", "closed_loop_J", "collect_batch", "estimate_gradient",
    "richardson_check", "train", "true_gradient_fd",
]
