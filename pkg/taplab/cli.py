#!/usr/bin/env python3
"""
taplab command-line driver.

Runs one named computation from a JSON run configuration and writes a CSV
artifact with a provenance header.

Usage:
    taplab --task parisi-solve
    taplab --config run.json --task verify-suite --seed 7 --out out/suite.csv

Configuration:
    The JSON file has the sections xi, measure, grid, mc, task and output.
    Flags override the matching configuration fields. Defaults for anything
    left unset come from environment variables or .env (see taplab.config).

Exit codes:
    0  success
    1  a verification check failed
    2  usage or configuration error
    3  numerical non-convergence
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from taplab.config import get_settings
from taplab.exceptions import ConfigError, ConvergenceError, TapLabError
from taplab.schemas import RunConfig, TaskName
from taplab.services.reporting import provenance, write_artifact
from taplab.services.tasks import TaskResult, get_task

logger = logging.getLogger("taplab")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


def build_config(args: argparse.Namespace) -> RunConfig:
    """Load the config file (or defaults) and apply CLI overrides."""
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}", field_path="--config")
        config = RunConfig.load(path.read_text(encoding="utf-8"))
    else:
        config = RunConfig()

    data = config.model_dump(mode="json")
    if args.task:
        data["task"]["name"] = args.task
    if args.seed is not None:
        data["mc"]["seed"] = args.seed
    if args.paths is not None:
        data["mc"]["paths"] = args.paths
    if args.grid_points is not None:
        data["grid"]["points"] = args.grid_points
    if args.quad_nodes is not None:
        data["grid"]["quad_nodes"] = args.quad_nodes
    if args.out:
        data["output"] = args.out
    # Overrides go through the same validation as the file.
    return RunConfig.load(json.dumps(data))


def output_path(config: RunConfig) -> Path:
    if config.output:
        return Path(config.output)
    return Path(get_settings().output_dir) / f"{config.task.name.value}.csv"


def exit_code(result: TaskResult) -> int:
    if not result.converged:
        return EXIT_NOT_CONVERGED
    if not result.passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def run(config: RunConfig) -> int:
    """Run the configured task, write its artifact and return the exit code."""
    task = get_task(config.task.name.value)
    logger.info("Running task %s (seed %d)", task.name, config.seed())
    try:
        result = task.run(config)
    except ConvergenceError as exc:
        logger.error("Task %s did not converge: %s", task.name, exc)
        return EXIT_NOT_CONVERGED
    info = {**result.info, "converged": result.converged, "passed": result.passed}
    out = write_artifact(output_path(config), result.rows, provenance(config, task.name, info))
    code = exit_code(result)
    logger.info("Task %s finished with exit code %d (%s)", task.name, code, out)
    return code


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(
        description="taplab: Parisi and TAP complexity computations for mixed p-spin models",
    )
    parser.add_argument("--config", help="Path to a JSON run configuration")
    parser.add_argument("--task", choices=[t.value for t in TaskName], help="Task to run")
    parser.add_argument("--seed", type=int, help="Random seed (overrides mc.seed)")
    parser.add_argument("--out", help="Output CSV path (default: <output_dir>/<task>.csv)")
    parser.add_argument("--paths", type=int, help="Monte Carlo path count (overrides mc.paths)")
    parser.add_argument("--grid-points", type=int, help="Spatial grid points (odd, >= 257)")
    parser.add_argument("--quad-nodes", type=int, help="Gauss-Hermite nodes (>= 32)")

    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, get_settings().log_level.upper(), logging.INFO),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    try:
        config = build_config(args)
    except ConfigError as exc:
        logger.error("Invalid configuration (%s): %s", exc.field_path, exc)
        sys.exit(EXIT_USAGE)

    try:
        code = run(config)
    except ConfigError as exc:
        logger.error("Invalid configuration (%s): %s", exc.field_path, exc)
        code = EXIT_USAGE
    except TapLabError as exc:
        logger.error("Task failed: %s", exc)
        code = EXIT_CHECK_FAILED
    sys.exit(code)


if __name__ == "__main__":
    main()
