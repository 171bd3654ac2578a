"""Flat key = value experiment configuration with a typed schema.

A config file is a list of ``key = value`` lines; ``#`` starts a comment.
Every experiment has its own schema, unknown keys are rejected and values
are converted to the schema type. Defaults fixed by the benchmark
definitions are marked as such; everything else is tagged ``non-paper
default`` (chosen here for reproducibility and runtime).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path


class ConfigError(Exception):
    """Invalid, unknown or malformed configuration entry."""


@dataclass(frozen=True)
class Field:
    name: str
    kind: str  # int | float | bool | str | floats
    default: object
    help: str
    benchmark: bool = False


def _f(name, kind, default, help, benchmark=False):
    return Field(name, kind, default, help, benchmark)


_EX1 = [
    _f("theta", "float", 0.5, "MPC stage-cost weight on x^2", benchmark=True),
    _f("N", "int", 20, "MPC horizon"),
    _f("terminal_constraint", "bool", True, "impose x_N^2 <= 1"),
    _f("gamma", "float", 0.9, "discount factor", benchmark=True),
    _f("slack_weight", "float", 1e3, "radius reward w in the robust scheme"),
    _f("norm_smoothing", "float", 1e-9, "smoothing of the back-off norm"),
]

SCHEMAS: dict[str, list[Field]] = {
    "fig1": _EX1 + [
        _f("eta_bar", "float", 0.05, "maximal exploration radius", benchmark=True),
        _f("grid_points", "int", 201, "number of states on [-1, 1]"),
        _f("eps_draws", "int", 1000, "exploration draws per state for the projection error"),
        _f("dp_states", "int", 401, "value-iteration state grid"),
        _f("dp_actions", "int", 401, "value-iteration action grid per state"),
        _f("dp_tol", "float", 1e-9, "Bellman residual tolerance"),
    ],
    "lemma2_scaling": _EX1 + [
        _f("radii", "floats", (0.2, 0.1, 0.05, 0.025), "exploration radii eta_bar"),
        _f("grid_points", "int", 41, "number of states on [-1, 1]"),
        _f("draws", "int", 10_000, "ball draws per state and radius"),
        _f("radius_tol", "float", 1e-6, "a state is kept when |eta - eta_bar| <= radius_tol for every radius"),
    ],
    "theorem2_moments": _EX1 + [
        _f("radii", "floats", (0.1, 0.05, 0.01), "exploration radii eta_bar"),
        _f("states", "floats", (0.75, 0.8, 0.85, 0.9), "states with an active robust constraint"),
        _f("draws", "int", 100_000, "ball draws per state and radius"),
    ],
    "rmpc_limit": _EX1 + [
        _f("radii", "floats", (0.1, 0.05, 0.025, 0.0125), "exploration radii eta_bar"),
        _f("grid_points", "int", 201, "number of states on [-1, 1]"),
    ],
    "fig3": [
        _f("theta0", "float", 0.1, "initial parameter", benchmark=True),
        _f("gamma", "float", 0.9, "discount factor", benchmark=True),
        _f("noise", "float", 1e-3, "disturbance half-width", benchmark=True),
        _f("s0", "float", 0.0, "initial state of every episode"),
        _f("N_stages", "int", 51, "number of MPC inputs", benchmark=True),
        _f("eta_bar", "float", 0.2, "maximal exploration radius"),
        _f("slack_weight", "float", 1e3, "radius reward w in the robust scheme"),
        _f("norm_smoothing", "float", 1e-9, "smoothing of the back-off norm"),
        _f("iterations", "int", 5, "RL iterations"),
        _f("step_size", "float", 1e-3, "gradient step"),
        _f("policy_kind", "str", "RMPC", "policy whose estimate drives the update (RMPC or MPC)"),
        _f("batch_mode", "str", "geometric", "geometric restarts or fixed-length episodes"),
        _f("n_samples", "int", 250, "critic samples per batch (geometric mode)"),
        _f("n_trajectories", "int", 10, "episodes per batch (fixed mode)"),
        _f("episode_length", "int", 30, "steps per episode (fixed mode)"),
        _f("rollout_horizon", "int", 150, "Monte Carlo rollout length for Q and V"),
        _f("n_rollouts", "int", 1, "rollouts per Q and V estimate"),
        _f("oracle_delta", "float", 1e-3, "central-difference step of the oracle"),
        _f("oracle_horizon", "int", 150, "oracle rollout length"),
        _f("oracle_rollouts", "int", 8, "oracle rollouts per parameter"),
        _f("richardson", "bool", True, "also evaluate the oracle at delta/2 and delta/4 at theta0"),
    ],
    "solver_corpus": [
        _f("fd_step", "float", 1e-4, "central-difference step for the sensitivity check"),
    ],
}

EXPERIMENTS = tuple(SCHEMAS)


def _parse(field: Field, text: str):
    t = text.strip()
    try:
        if field.kind == "int":
            return int(t)
        if field.kind == "float":
            return float(t)
        if field.kind == "bool":
            low = t.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(t)
        if field.kind == "floats":
            vals = tuple(float(v) for v in t.replace(",", " ").split())
            if not vals:
                raise ValueError("empty list")
            return vals
        return t
    except ValueError as exc:
        raise ConfigError(f"{field.name}: cannot parse {text!r} as {field.kind}") from exc


def _format(field: Field, value) -> str:
    if field.kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if field.kind == "bool":
        return "true" if value else "false"
    if field.kind == "float":
        return repr(float(value))
    return str(value)


def schema(experiment: str) -> dict[str, Field]:
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    return {f.name: f for f in SCHEMAS[experiment]}


def read_file(path: str | Path) -> dict[str, str]:
    """Raw ``key -> text`` entries of a config file."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       delimiters=("=",))
    parser.optionxform = str  # keep key case
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return dict(parser["config"])


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = val
    return out


def resolve(experiment: str, path: str | Path | None = None, overrides=None) -> dict[str, object]:
    """Defaults, then the file, then ``key=value`` overrides, all type checked."""
    fields = schema(experiment)
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(read_file(path))
    if isinstance(overrides, dict):
        raw.update(overrides)
    else:
        raw.update(parse_overrides(overrides))
    named = raw.pop("experiment", None)
    if named is not None and named.strip() != experiment:
        raise ConfigError(f"config is for experiment {named.strip()!r}, not {experiment!r}")
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) for {experiment}: {', '.join(unknown)}")
    cfg = {name: f.default for name, f in fields.items()}
    for key, text in raw.items():
        cfg[key] = _parse(fields[key], text)
    _validate(experiment, cfg)
    return cfg


def _validate(experiment: str, cfg: dict) -> None:
    for key, val in cfg.items():
        if key in ("grid_points", "draws", "eps_draws", "dp_states", "dp_actions", "n_samples", "n_trajectories",
                   "episode_length", "rollout_horizon", "n_rollouts", "oracle_horizon", "N", "N_stages") and val < 1:
            raise ConfigError(f"{key} must be positive")
        if key in ("oracle_rollouts",) and val < 2:
            raise ConfigError(f"{key} must be at least 2 for a standard error")
        if key == "iterations" and val < 0:
            raise ConfigError("iterations must be nonnegative")
        if key in ("eta_bar",) and val < 0:
            raise ConfigError("eta_bar must be nonnegative")
        if key == "radii" and any(r <= 0 for r in val):
            raise ConfigError("radii must be positive")
        if key == "gamma" and not 0.0 < val < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if key in ("oracle_delta", "fd_step", "dp_tol") and val <= 0:
            raise ConfigError(f"{key} must be positive")
    if cfg.get("grid_points", 2) < 2:
        raise ConfigError("grid_points must be at least 2")
    if "policy_kind" in cfg and cfg["policy_kind"] not in ("RMPC", "MPC"):
        raise ConfigError("policy_kind must be RMPC or MPC")
    if "batch_mode" in cfg and cfg["batch_mode"] not in ("geometric", "fixed"):
        raise ConfigError("batch_mode must be geometric or fixed")


def dump(experiment: str, cfg: dict, seed: int | None = None) -> str:
    """Config text that :func:`resolve` reads back to ``cfg``."""
    fields = schema(experiment)
    lines = [f"# resolved configuration for {experiment}"]
    if seed is not None:
        lines.append(f"# seed {seed}")
    lines.append(f"experiment = {experiment}")
    for name, f in fields.items():
        tag = "benchmark definition" if f.benchmark else "non-paper default"
        lines.append(f"# {f.help} ({tag})")
        lines.append(f"{name} = {_format(f, cfg[name])}")
    return "\n".join(lines) + "\n"
