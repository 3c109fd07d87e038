"""Command-line entry point: ``pebk run <experiment> ...`` and ``pebk list``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .ebk import EbkConvergenceError
from .experiments import REGISTRY, run_experiment
from .linalg import SingularOperatorError
from .lowrank import SourceSampleError
from .wr import WrDivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3
SOLVER_ERRORS = (EbkConvergenceError, WrDivergenceError, SingularOperatorError, SourceSampleError,
                 FloatingPointError, ArithmeticError)

log = logging.getLogger("pebk")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pebk", description="Paraexp exponential block Krylov experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment and write CSV tables")
    run.add_argument("experiment")
    run.add_argument("--config", help="config file with a [<experiment>] section")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    run.add_argument("--out", default=".", help="output directory (default: .)")
    run.add_argument("--no-timing", action="store_true", help="write zeros in all timing columns")
    run.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    sub.add_parser("list", help="list the available experiments")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "list":
        width = max(map(len, REGISTRY))
        for name, exp in REGISTRY.items():
            print(f"{name:<{width}}  {exp.summary}")
        return EXIT_OK
    try:
        if args.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {args.experiment!r}; try one of {', '.join(REGISTRY)}")
        exp = REGISTRY[args.experiment]
        cfg = load_config(args.experiment, exp.schema, args.config, args.overrides)
        if args.dump_config:
            sys.stdout.write(cfg.to_text(exp.schema))
            return EXIT_OK
        reports = run_experiment(cfg, args.out, no_timing=args.no_timing)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for r in reports:
        print(f"wrote {args.out}/{args.experiment}-{r.name}.csv ({len(r.rows)} rows)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
