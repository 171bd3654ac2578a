"""Command-line entry point: ``rmpcpg run <experiment> --config <path> --seed <u64> --out <dir>``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError
from .critic import RankDeficient
from .exploration import Streams, ZeroEta
from .mpc import InfeasibleState

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2, 3


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from exc
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rmpcpg", description="Policy-gradient experiments with robust MPC policies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment and write its CSV files")
    run.add_argument("experiment", choices=cfgmod.EXPERIMENTS)
    run.add_argument("--config", type=Path, default=None, help="key = value file (defaults when omitted)")
    run.add_argument("--seed", type=_seed, default=0, help="master seed (unsigned 64-bit)")
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config entry (repeatable)")
    run.add_argument("-v", "--verbose", action="store_true")
    show = sub.add_parser("config", help="print the default config of an experiment")
    show.add_argument("experiment", choices=cfgmod.EXPERIMENTS)
    sub.add_parser("list", help="list experiments")
    return p


def run(experiment: str, cfg: dict, seed: int, out: Path) -> list[Path]:
    """Run ``experiment`` with a resolved config; writes ``resolved.cfg`` first."""
    from .experiments import RUNNERS

    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(cfgmod.dump(experiment, cfg, seed=seed))
    return RUNNERS[experiment](cfg, Streams(seed).child(experiment), out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(cfgmod.EXPERIMENTS))
        return EXIT_OK
    if args.command == "config":
        print(cfgmod.dump(args.experiment, cfgmod.resolve(args.experiment)), end="")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.resolve(args.experiment, args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        files = run(args.experiment, cfg, args.seed, args.out)
    except (InfeasibleState, ZeroEta) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RankDeficient as exc:
        print(f"critic fit failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for f in files:
        print(f)
    print(f"{args.experiment} finished in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
