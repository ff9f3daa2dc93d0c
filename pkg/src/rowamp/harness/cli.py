"""Command-line entry point: ``python -m rowamp <subcommand> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

from ..analysis import ReplicaNonConvergence, SEFailure, UnsupportedChannelError
from ..ep import IterationFailure
from ..model import ConfigurationError
from ..numerics import SingularMatrixError
from .config import load_config
from .experiments import run_experiment, sweep_phase_diagram, write_table
from .figures import FIGURES

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERICAL_ERRORS = (IterationFailure, SEFailure, ReplicaNonConvergence, SingularMatrixError)

log = logging.getLogger("rowamp")


class _Parser(argparse.ArgumentParser):
    # argparse already exits with status 2 on usage errors; keep the text on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _common(p, config=True):
    if config:
        p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker threads (env ROWAMP_THREADS wins)")
    p.add_argument("--mc-samples", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="rowamp", description="Row-structured GLM estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (
        ("simulate", "run the configured estimators over trials and sweep points"),
        ("se", "state-evolution trajectories for each sweep point"),
        ("replica", "replica fixed point and free energy for each sweep point"),
        ("mutual-info", "replica mutual information for each sweep point"),
        ("phase-diagram", "terminal NMSE over the (rho, L) sweep grid"),
    ):
        _common(sub.add_parser(name, help=text))
    rp = sub.add_parser("reproduce", help="regenerate figure data")
    rp.add_argument("figure", choices=sorted(FIGURES))
    rp.add_argument("--full", action="store_true", help="use the original (slow) problem sizes")
    _common(rp, config=False)
    return parser


def _threads(args):
    env = os.environ.get("ROWAMP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"ROWAMP_THREADS must be an integer, got {env!r}") from None
    return max(1, args.threads or 1)


def _load(args):
    cfg = load_config(args.config, output=args.out)
    return cfg.with_overrides(seed=args.seed, trials=args.trials, mc_samples=args.mc_samples)


def _run(args):
    threads = _threads(args)
    if args.command == "reproduce":
        kw = {"seed": args.seed or 0, "threads": threads, "trials": args.trials, "full": args.full}
        if args.mc_samples:
            kw["mc_samples"] = args.mc_samples
        for path in FIGURES[args.figure](args.out, **kw):
            print(path)
        return
    cfg = _load(args)
    if args.command == "simulate":
        if not cfg.estimators:
            raise ConfigurationError("simulate needs at least one estimator")
        cfg = replace(cfg, se=False, replica=False, mi=False)
    elif args.command == "se":
        cfg = replace(cfg, estimators=(), se=True, replica=False, mi=False, name=f"{cfg.name}_se")
    elif args.command == "replica":
        cfg = replace(cfg, estimators=(), se=False, replica=True, mi=False, name=f"{cfg.name}_replica")
    elif args.command == "mutual-info":
        cfg = replace(cfg, estimators=(), se=False, replica=True, mi=True, name=f"{cfg.name}_mi")
    elif args.command == "phase-diagram":
        rhos, Ls, mean, se, diag = sweep_phase_diagram(cfg, threads)
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{cfg.name}_phase.csv")
        rows = [(float(r), int(L), float(mean[i, j]), float(se[i, j])) for i, r in enumerate(rhos) for j, L in enumerate(Ls)]
        write_table(path, ("rho", "L", "nmse_db", "nmse_db_stderr"), rows)
        print(path)
        print(f"monotonicity violations: {diag}")
        return
    run_experiment(cfg, threads)
    print(os.path.join(args.out, f"{cfg.name}.csv"))
    print(os.path.join(args.out, f"{cfg.name}.json"))


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (ConfigurationError, UnsupportedChannelError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
