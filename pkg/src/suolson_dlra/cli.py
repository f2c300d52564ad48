"""Command-line entry point.

    suolson-dlra run --config FILE [--solver full|advection|dlra] [--set k=v]... [--output-dir DIR]
    suolson-dlra verify --suite NAME

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 acceptance failure.
The log level is read from SUOLSON_LOG_LEVEL (default WARNING).
"""

import argparse
import json
import logging
import os
import sys

from .experiments import ConfigError, load_config, run_experiment
from .full import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ACCEPTANCE = 0, 1, 2, 3
LOG_ENV = "SUOLSON_LOG_LEVEL"


def _parser():
    p = argparse.ArgumentParser(prog="suolson-dlra",
                                description="Su-Olson full-rank and low-rank solvers.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--solver", choices=["full", "advection", "dlra"])
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override a config key (repeatable)")
    run.add_argument("--output-dir")

    from .verification import SUITES
    ver = sub.add_parser("verify", help="run an acceptance suite")
    ver.add_argument("--suite", required=True, choices=sorted(SUITES))
    return p


def _run(args):
    overrides = list(args.overrides)
    if args.solver:
        overrides.append(f"solver={args.solver}")
    if args.output_dir:
        overrides.append(f"output_dir={args.output_dir}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg)
    except SolverError as exc:
        print(f"solver failure at stage {exc.stage!r}, step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(json.dumps(result.summary(), indent=2))
    return EXIT_OK


def _verify(args):
    from .verification import run_suite

    outcomes = run_suite(args.suite)
    for o in outcomes:
        print(o.line())
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_ACCEPTANCE


def main(argv=None):
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return _verify(args)


if __name__ == "__main__":
    sys.exit(main())
