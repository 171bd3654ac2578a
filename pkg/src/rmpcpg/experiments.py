"""Experiment runners that turn a resolved config into CSV artifacts."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from . import dp
from .actor import BatchConfig, OracleConfig, richardson_check, train
from .corpus import corpus
from .envs import example1, example2
from .exploration import Streams, ZeroEta, ball_draws, moment_report
from .mpc import policy
from .nlp_solver import kkt_sensitivity, solve
from .projection import explore_many
from .rmpc import RmpcConfig, robust_policy

logger = logging.getLogger(__name__)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    """CSV with a header row and floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if len(r) != len(header):
                raise ValueError(f"row of length {len(r)} for {len(header)} columns in {path.name}")
            w.writerow([_cell(v) for v in r])
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Numeric columns of a CSV written by :func:`write_csv` (non-numeric stay strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(c) if c != "" else np.nan for c in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def _ex1(cfg):
    _, spec = example1(N=cfg["N"], terminal_constraint=cfg["terminal_constraint"], gamma=cfg["gamma"])
    return spec


def _rcfg(cfg, eta_bar):
    return RmpcConfig(eta_bar=eta_bar, slack_weight=cfg["slack_weight"], norm_smoothing=cfg["norm_smoothing"])


def _grid(n):
    return np.linspace(-1.0, 1.0, n)


def _sweep(spec, rc, grid, theta):
    """Robust (or nominal when ``rc`` is None) evaluations along a state grid with warm starts."""
    out, warm = [], None
    for s in grid:
        if rc is None:
            pe = policy(spec, [s], [theta], warm=warm, with_sensitivity=False)
        else:
            pe = robust_policy(spec, rc, [s], [theta], warm=warm, with_sensitivity=False)
        warm = pe.solution
        out.append(pe)
    return out


# ---------------------------------------------------------------- fig1


def run_fig1(cfg: dict, streams: Streams, out: Path) -> list[Path]:
    spec = _ex1(cfg)
    theta, rc = cfg["theta"], _rcfg(cfg, cfg["eta_bar"])
    grid = _grid(cfg["grid_points"])
    nom = _sweep(spec, None, grid, theta)
    rob = _sweep(spec, rc, grid, theta)
    sol = dp.value_iteration_example1(cfg["dp_states"], cfg["dp_actions"], cfg["gamma"], cfg["dp_tol"])
    pi_dp = sol.policy_at(grid)
    files = [write_csv(out / "policies.csv", ["s", "pi_mpc", "pi_rmpc", "pi_dp"],
                       [(s, a.u0[0], b.u0[0], d) for s, a, b, d in zip(grid, nom, rob, pi_dp)])]
    files.append(write_csv(out / "radius.csv", ["s", "eta"], [(s, b.eta) for s, b in zip(grid, rob)]))
    h = lambda s, u: s * s + 5.0 * u * u - 1.0  # noqa: E731
    margins = []
    for s, a, b in zip(grid, nom, rob):
        tight = float(b.solution.constraint_values[0]) if b.solution is not None and rc.eta_bar > 0 else h(s, b.u0[0])
        margins.append((s, h(s, a.u0[0]), h(s, b.u0[0]), -tight))
    files.append(write_csv(out / "margins.csv", ["s", "h_mpc", "h_rmpc", "tightened_margin_rmpc"], margins))
    rows = []
    for i, (s, b) in enumerate(zip(grid, rob)):
        if b.eta <= 0.0:
            rows.append((s, b.eta, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        E = ball_draws(spec.m, b.eta, streams.rng("fig1", "eps", i), cfg["eps_draws"])
        res = explore_many(spec, [s], [theta], b, E)
        nrm = np.array([np.linalg.norm(r.epsilon) for r in res])
        q50, q90, q99 = np.quantile(nrm, [0.5, 0.9, 0.99])
        rows.append((s, b.eta, q50, q90, q99, nrm.max(), float(np.mean([r.active for r in res]))))
    files.append(write_csv(out / "eps.csv", ["s", "eta", "eps_q50", "eps_q90", "eps_q99", "eps_max", "frac_projected"],
                           rows))
    files.append(write_csv(out / "dp_policy.csv", ["s", "pi_dp", "value_dp"],
                           list(zip(sol.s_grid, sol.policy, sol.value))))
    return files


# ---------------------------------------------------------------- lemma 2


def run_lemma2(cfg: dict, streams: Streams, out: Path) -> list[Path]:
    """Largest projection correction per radius over the states that keep the full radius."""
    spec = _ex1(cfg)
    theta = cfg["theta"]
    radii = tuple(cfg["radii"])
    grid = _grid(cfg["grid_points"])
    bases = {r: _sweep(spec, _rcfg(cfg, r), grid, theta) for r in radii}
    keep = [i for i in range(grid.size) if all(abs(bases[r][i].eta - r) <= cfg["radius_tol"] for r in radii)]
    if not keep:
        raise ZeroEta("no state keeps the full exploration radius for every eta_bar")
    stats = []
    for j, r in enumerate(radii):
        mx, arg, n_proj = 0.0, np.nan, 0
        for i in keep:
            b = bases[r][i]
            E = ball_draws(spec.m, b.eta, streams.rng("lemma2", j, i), cfg["draws"])
            res = explore_many(spec, [grid[i]], [theta], b, E)
            nrm = np.array([np.linalg.norm(x.epsilon) for x in res])
            n_proj += int(sum(x.active for x in res))
            if nrm.max() > mx:
                mx, arg = float(nrm.max()), grid[i]
        stats.append((r, mx, arg, n_proj / (len(keep) * cfg["draws"])))
    x = np.log([s[0] for s in stats])
    y = np.log([max(s[1], 1e-300) for s in stats])
    slope = float(np.polyfit(x, y, 1)[0]) if len(stats) >= 2 else np.nan
    rows = [(r, mx, mx / r**2, slope, arg, fp, len(keep)) for r, mx, arg, fp in stats]
    return [write_csv(out / "lemma2.csv", ["eta", "max_eps", "alpha", "slope", "argmax_s", "frac_projected",
                                            "n_states"], rows)]


# ---------------------------------------------------------------- theorem 2


def run_theorem2(cfg: dict, streams: Streams, out: Path) -> list[Path]:
    spec = _ex1(cfg)
    theta = cfg["theta"]
    rows = []
    for j, r in enumerate(cfg["radii"]):
        rc = _rcfg(cfg, r)
        for i, s in enumerate(cfg["states"]):
            base = robust_policy(spec, rc, [s], [theta], with_sensitivity=False)
            active = bool(base.solution.lambda_star[0] > 0.0)
            rep = moment_report(spec, rc, [s], [theta], cfg["draws"], streams.rng("theorem2", j, i), base=base)
            m = spec.m
            second_err = rep.second - rep.reference_second * np.eye(m)
            k = np.unravel_index(np.argmax(np.abs(second_err)), second_err.shape)
            rows.append((r, s, rep.eta, active,
                         rep.mean_dev, float(np.linalg.norm(rep.mean_se)),
                         float(np.abs(second_err[k])), float(rep.second_se[k]),
                         rep.third_dev, float(np.linalg.norm(rep.third_se)),
                         rep.frac_projected, rep.n_samples))
    header = ["eta_bar", "s", "eta", "constraint_active", "mean_dev", "mean_se", "second_dev", "second_se",
              "third_dev", "third_se", "frac_projected", "draws"]
    return [write_csv(out / "theorem2.csv", header, rows)]


# ---------------------------------------------------------------- limit


def run_rmpc_limit(cfg: dict, streams: Streams, out: Path) -> list[Path]:
    spec = _ex1(cfg)
    theta = cfg["theta"]
    grid = _grid(cfg["grid_points"])
    nom = np.array([pe.u0[0] for pe in _sweep(spec, None, grid, theta)])
    radii = list(cfg["radii"])
    dev, arg = [], []
    for r in radii:
        rob = np.array([pe.u0[0] for pe in _sweep(spec, _rcfg(cfg, r), grid, theta)])
        d = np.abs(rob - nom)
        dev.append(float(d.max()))
        arg.append(grid[int(d.argmax())])
    # dev / eta_bar = C + B eta_bar; the intercept C is the first-order rate
    eb = np.array(radii)
    C = float(np.polyfit(eb, np.array(dev) / eb, 1)[1]) if eb.size >= 2 else dev[0] / radii[0]
    rows = [(r, d, a, C, C * r) for r, d, a in zip(radii, dev, arg)]
    return [write_csv(out / "rmpc_limit.csv", ["eta_bar", "max_dev", "argmax_s", "C", "C_eta_bar"], rows)]


# ---------------------------------------------------------------- corpus


def run_solver_corpus(cfg: dict, streams: Streams, out: Path) -> list[Path]:
    """Solve every analytic problem; compare with the closed form and a finite-difference sensitivity."""
    h = cfg["fd_step"]
    rows = []
    for prob in corpus():
        sol = solve(prob.nlp, prob.params)
        err = float(np.max(np.abs(sol.u_star - prob.u_exact)))
        K = kkt_sensitivity(prob.nlp, sol, prob.params)
        fd = np.zeros_like(K)
        for j in range(prob.params.size):
            dp_ = np.zeros(prob.params.size)
            dp_[j] = h
            up = solve(prob.nlp, prob.params + dp_, warm_start=sol).u_star
            dn = solve(prob.nlp, prob.params - dp_, warm_start=sol).u_star
            fd[:, j] = (up - dn) / (2 * h)
        sens_rel = float(np.linalg.norm(K - fd) / max(np.linalg.norm(fd), 1.0))
        exact_rel = float(np.linalg.norm(K - prob.du_dp) / max(np.linalg.norm(prob.du_dp), 1.0))
        rows.append((prob.name, str(sol.status.value), sol.iterations, sol.kkt_residual, err, sens_rel, exact_rel))
    return [write_csv(out / "solver_corpus.csv",
                      ["problem", "status", "iterations", "kkt_residual", "primal_error", "sens_fd_rel",
                       "sens_exact_rel"], rows)]


# ---------------------------------------------------------------- fig3


def run_fig3(cfg: dict, streams: Streams, out: Path) -> list[Path]:
    env, spec = example2(N_stages=cfg["N_stages"], noise=cfg["noise"], gamma=cfg["gamma"], s0=cfg["s0"])
    rc = RmpcConfig(eta_bar=cfg["eta_bar"], slack_weight=cfg["slack_weight"], norm_smoothing=cfg["norm_smoothing"])
    batch = BatchConfig(mode=cfg["batch_mode"], n_samples=cfg["n_samples"], n_trajectories=cfg["n_trajectories"],
                        episode_length=cfg["episode_length"], rollout_horizon=cfg["rollout_horizon"],
                        n_rollouts=cfg["n_rollouts"])
    oracle = OracleConfig(delta=cfg["oracle_delta"], horizon=cfg["oracle_horizon"], n_rollouts=cfg["oracle_rollouts"])
    files = []
    if cfg["richardson"]:
        rng_seed = int(streams.seed_sequence("richardson").generate_state(1)[0])
        rows = []
        for kind, kcfg in (("RMPC", rc), ("MPC", None)):
            rcheck = richardson_check(env, spec, kcfg, [cfg["theta0"]], delta=cfg["oracle_delta"], seed=rng_seed,
                                      horizon=oracle.horizon, n_rollouts=oracle.n_rollouts, s0=[cfg["s0"]])
            for g in (rcheck.coarse, rcheck.fine, rcheck.finest):
                rows.append((kind, g.delta, g.grad[0], g.se[0]))
        files.append(write_csv(out / "richardson.csv", ["policy", "delta", "grad", "se"], rows))
    trace = train(env, spec, rc, [cfg["theta0"]], cfg["iterations"], batch, cfg["step_size"], streams,
                  policy_kind=cfg["policy_kind"], compare=True, oracle=oracle, s0=[cfg["s0"]])
    first = lambda v: np.nan if v is None else float(np.atleast_1d(v)[0])  # noqa: E731
    main, detail = [], []
    for rec in trace.records:
        main.append((rec.iteration, rec.theta[0], first(rec.grad_mpc_est), first(rec.grad_rmpc_est),
                     first(rec.oracle_rmpc), first(rec.oracle_rmpc_se)))
        detail.append((rec.iteration, rec.theta[0], first(rec.grad_mpc_est), first(rec.grad_mpc_se),
                       first(rec.grad_rmpc_est), first(rec.grad_rmpc_se), first(rec.oracle_mpc),
                       first(rec.oracle_mpc_se), first(rec.oracle_rmpc), first(rec.oracle_rmpc_se),
                       first(rec.J_mpc), first(rec.J_rmpc), first(rec.residual_mpc), first(rec.residual_rmpc)))
    files.append(write_csv(out / "gradients.csv",
                           ["iteration", "theta", "grad_mpc_est", "grad_rmpc_est", "grad_oracle", "oracle_se"], main))
    files.append(write_csv(out / "gradients_detail.csv",
                           ["iteration", "theta", "grad_mpc_est", "grad_mpc_se", "grad_rmpc_est", "grad_rmpc_se",
                            "oracle_mpc", "oracle_mpc_se", "oracle_rmpc", "oracle_rmpc_se", "J_mpc", "J_rmpc",
                            "residual_mpc", "residual_rmpc"], detail))
    if trace.error is not None:
        raise trace.error
    return files


RUNNERS = {
    "fig1": run_fig1,
    "fig3": run_fig3,
    "lemma2_scaling": run_lemma2,
    "theorem2_moments": run_theorem2,
    "rmpc_limit": run_rmpc_limit,
    "solver_corpus": run_solver_corpus,
}
