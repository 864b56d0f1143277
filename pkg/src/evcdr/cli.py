"""
Command line interface.

    evcdr run <config.yaml> <output> [--format csv|json] [--seed N] [--verbose]
    evcdr validate <config.yaml>
    evcdr oracle <config.yaml> <output> [--format csv|json]

Exit codes: 0 success, 2 configuration error, 3 numerical error, 1 any other
failure, -1 usage error.
"""

# pylint: disable=C0301,W0718
from dataclasses import replace
from typing import List, Optional
import argparse
import logging
import sys

from evcdr.exceptions import ConfigError, NumericalError
from evcdr.experiment import RESULT_FORMATS, ExperimentConfig, emit_results, oracle, run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = -1


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evcdr", description="Echo verified Clifford data regression experiments.")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    commands = parser.add_subparsers(dest="command")

    run = commands.add_parser("run", help="Run an experiment and write its results.")
    run.add_argument("config", help="YAML configuration file.")
    run.add_argument("output", help="Result file.")
    run.add_argument("--format", choices=RESULT_FORMATS, default="csv")
    run.add_argument("--seed", type=int, default=None, help="Override the configured seed.")

    validate = commands.add_parser("validate", help="Check a configuration file.")
    validate.add_argument("config", help="YAML configuration file.")

    reference = commands.add_parser("oracle", help="Write the noiseless reference values only.")
    reference.add_argument("config", help="YAML configuration file.")
    reference.add_argument("output", help="Result file.")
    reference.add_argument("--format", choices=RESULT_FORMATS, default="csv")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse the arguments, run the command and return its exit code."""
    parser = _parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit:
        return EXIT_USAGE
    if args.command is None:
        parser.print_usage()
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="time=%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s",
    )
    try:
        config = ExperimentConfig.from_yaml(args.config)
        if args.command == "validate":
            print(f"Configuration {args.config} is valid.")
            return EXIT_OK
        if args.command == "oracle":
            emit_results(oracle(config), args.output, args.format)
            return EXIT_OK
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"Seed must be non-negative, got {args.seed}.")
            config = replace(config, seed=args.seed)
        rows = run_experiment(config)
        emit_results(rows, args.output, args.format)
        logger.info("Wrote %d rows to %s", len(rows), args.output)
        return EXIT_OK
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
