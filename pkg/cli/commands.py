"""Argument parsing and command handlers for the gmsfem CLI."""

import argparse
import sys
from typing import Any, Optional, Sequence

from pydantic import ValidationError

from cli.experiment import run_experiment, sweep_epsilon
from cli.models import load_config
from config.logger import get_logger
from config.settings import settings
from services.errors import InvalidArgumentError, NumericalFailureError

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gmsfem",
        description="Multiscale solver experiments for the steady linear Boltzmann equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="Path to a key = value experiment config")
    method = common.add_mutually_exclusive_group()
    method.add_argument("--det", dest="snapshot_method", action="store_const", const="det",
                        help="Deterministic delta-inflow snapshots")
    method.add_argument("--ran", dest="snapshot_method", action="store_const", const="ran",
                        help="Randomized oversampled snapshots")
    common.add_argument("--seed", type=int, help="Seed for randomized snapshots")
    common.add_argument("--threads", type=int, help="Worker threads for block-local work")
    common.add_argument("--dump-solution", dest="dump_solution", help="CSV path for solution dumps")
    common.add_argument("--output", dest="output_csv", help="Result CSV path")
    common.add_argument("--full", dest="include_full", action="store_const", const=True,
                        help="Also report the full snapshot space (L=full)")
    common.add_argument("--no-cache", dest="use_cache", action="store_const", const=False,
                        help="Rebuild the offline stage even when cached")

    sub.add_parser("run", parents=[common], help="Run one experiment")
    sweep = sub.add_parser("sweep", parents=[common], help="Sweep epsilon (and contrast power)")
    sweep.add_argument("--epsilon", type=float, nargs="+", required=True, help="Epsilon values")
    sweep.add_argument("--power", type=float, nargs="+", help="Contrast exponents")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    keys = ("snapshot_method", "seed", "threads", "dump_solution", "output_csv", "include_full", "use_cache")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, _overrides(args))
        settings.ensure_dirs()
        if args.command == "run":
            result = run_experiment(config)
            logger.info(f"Done: {len(result.rows)} rows in {result.csv_path}")
        else:
            result = sweep_epsilon(config, args.epsilon, args.power)
            logger.info(f"Done: {len(result.rows)} rows in {result.csv_path}")
    except ValidationError as e:
        logger.error(f"Invalid config {args.config}: {e}")
        return EXIT_INVALID
    except InvalidArgumentError as e:
        logger.error(f"Invalid argument: {e}")
        return EXIT_INVALID
    except NumericalFailureError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
