"""
    Run the bundled experiment configurations and write one result file per configuration.

    Usage: python utils/run_acceptance.py <output_dir> [<config> ...]

    Each <config> is either a YAML path or the name of a file in configs/
    (with or without the .yaml suffix). All bundled configurations run when
    none is given. The median absolute error of every estimator is printed
    after each run.
"""

# pylint: disable=C0301,W0718,E0401,C0413

import sys
import os
import glob
import logging
from typing import List

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))
from evcdr.exceptions import ConfigError
from evcdr.experiment import ExperimentConfig, emit_results, median_errors, run_experiment

CONFIG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "../configs"))


def resolve_configs(names: List[str]) -> List[str]:
    """Map configuration names to YAML paths; every bundled file when names is empty."""
    if not names:
        return sorted(glob.glob(f"{CONFIG_DIR}/*.yaml"))
    paths = []
    for name in names:
        if os.path.exists(name):
            paths.append(name)
            continue
        path = os.path.join(CONFIG_DIR, name if name.endswith(".yaml") else f"{name}.yaml")
        if not os.path.exists(path):
            raise ConfigError(f"No configuration named '{name}'.")
        paths.append(path)
    return paths


def main():
    """Main routine to run each configuration named on the command line."""

    if len(sys.argv) <= 1:
        print("Usage: python run_acceptance.py <output_dir> [<config> ...]")
        return -1
    output_dir = sys.argv[1]
    logging.basicConfig(
        level=logging.INFO,
        format="time=%(asctime)s level=%(levelname)s logger=%(name)s msg=%(message)s",
    )
    try:
        paths = resolve_configs(sys.argv[2:])
    except ConfigError as e:
        print(f"Error: {e}")
        return -1
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            config = ExperimentConfig.from_yaml(path)
            rows = run_experiment(config)
        except Exception as e:
            print(f"Error: {name} failed: {e}")
            return 1
        emit_results(rows, os.path.join(output_dir, f"{name}.csv"), "csv")
        for variant, error in sorted(median_errors(rows).items()):
            print(f"{name}: {variant} median error {error:.3g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
