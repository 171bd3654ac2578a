"""Uniform ball exploration, reproducible random streams and moment statistics."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .mpc import MpcSpec, PolicyEval
from .nlp_solver import DEFAULT_OPTIONS, SolverOptions
from .projection import explore_many
from .rmpc import RmpcConfig, robust_policy


class ZeroEta(Exception):
    """The solved exploration radius is zero, so normalized moments are undefined."""


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be nonnegative")
        return int(part)
    return zlib.crc32(str(part).encode())


class Streams:
    """Counter-based random streams derived from one master seed.

    ``streams.rng("rollout", i, t)`` always returns a Philox generator in
    the same state for the same key path, independently of the order in
    which streams are requested.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & (2**64 - 1)

    def seed_sequence(self, *key) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=tuple(_key_int(k) for k in key))

    def rng(self, *key) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence(*key)))

    def child(self, *key) -> "Streams":
        """A derived stream family with its own master seed."""
        return Streams(int(self.seed_sequence(*key).generate_state(1, np.uint64)[0]))


@dataclass
class ExplorationSample:
    e_hat: np.ndarray
    eta: float
    seed_path: tuple = ()


def ball_draws(m: int, eta: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` i.i.d. uniform draws from the closed ball of radius ``eta`` in R^m."""
    if eta < 0.0:
        raise ValueError("eta must be nonnegative")
    if m == 1:
        return rng.uniform(-eta, eta, size=(size, 1))
    d = rng.standard_normal((size, m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = eta * rng.random(size) ** (1.0 / m)
    return d * r[:, None]


def sample_ball(m: int, eta: float, rng: np.random.Generator, seed_path: tuple = ()) -> ExplorationSample:
    """One uniform draw from the ball ``B(0, eta)``; exactly zero when ``eta = 0``."""
    if eta == 0.0:
        return ExplorationSample(np.zeros(m), 0.0, seed_path)
    return ExplorationSample(ball_draws(m, eta, rng, 1)[0], float(eta), seed_path)


def ball_second_moment(m: int) -> float:
    """``E[e e^T] / eta^2`` diagonal value for the uniform ball in R^m."""
    return 1.0 / (m + 2.0)


@dataclass
class MomentReport:
    eta: float
    n_samples: int
    mean: np.ndarray  # E[e_perp] / eta
    mean_se: np.ndarray
    second: np.ndarray  # E[e_perp e_perp^T] / eta^2
    second_se: np.ndarray
    third: np.ndarray  # E[e_perp |e_perp|^2] / eta^2
    third_se: np.ndarray
    frac_projected: float
    reference_second: float

    @property
    def mean_dev(self) -> float:
        return float(np.linalg.norm(self.mean))

    @property
    def second_dev(self) -> float:
        m = self.second.shape[0]
        return float(np.max(np.abs(self.second - self.reference_second * np.eye(m))))

    @property
    def third_dev(self) -> float:
        return float(np.linalg.norm(self.third))


def moment_report(
    spec: MpcSpec,
    cfg: RmpcConfig,
    s,
    theta,
    n_samples: int,
    rng: np.random.Generator,
    base: PolicyEval | None = None,
    reference_second: float | None = None,
    options: SolverOptions = DEFAULT_OPTIONS,
) -> MomentReport:
    """Monte Carlo moments of the projected exploration at ``s``.

    Args:
        reference_second: Interior second moment to compare against; defaults
            to the analytic uniform-ball value ``1 / (m + 2)``.

    Raises:
        ZeroEta: if the robust policy has no exploration room at ``s``.
    """
    if base is None:
        base = robust_policy(spec, cfg, s, theta, options=options, with_sensitivity=False)
    eta = base.eta
    if eta <= 1e-12:
        raise ZeroEta(f"solved radius is {eta:.3g} at s={np.atleast_1d(s).tolist()}")
    E = ball_draws(spec.m, eta, rng, n_samples)
    res = explore_many(spec, s, theta, base, E, options=options)
    P = np.array([r.e_perp for r in res])
    n = float(n_samples)
    z1 = P / eta
    z2 = np.einsum("ki,kj->kij", P, P) / eta**2
    z3 = P * np.sum(P * P, axis=1, keepdims=True) / eta**2
    se = lambda z: z.std(axis=0, ddof=1) / np.sqrt(n)  # noqa: E731
    return MomentReport(
        eta=eta,
        n_samples=n_samples,
        mean=z1.mean(axis=0), mean_se=se(z1),
        second=z2.mean(axis=0), second_se=se(z2),
        third=z3.mean(axis=0), third_se=se(z3),
        frac_projected=float(np.mean([r.active for r in res])),
        reference_second=ball_second_moment(spec.m) if reference_second is None else reference_second,
    )
