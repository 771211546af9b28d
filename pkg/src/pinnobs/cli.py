"""
Command-line entry point.

Exit statuses: 0 success, 2 invalid configuration or input, 3 numerical
failure (divergence, blow-up), 4 I/O failure. Runs configured with a
``[storage] database_url`` record their loss history there; ``history``
prints it back.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Optional
from typing import Sequence

from sqlalchemy.exc import SQLAlchemyError

from pinnobs.abc import Recorder
from pinnobs.application import ObserverApplication
from pinnobs.application import write_history
from pinnobs.config import AblationConfig
from pinnobs.config import ExperimentConfig
from pinnobs.evaluator import format_metrics
from pinnobs.evaluator import metrics
from pinnobs.exceptions import ConfigError
from pinnobs.exceptions import NumericalError
from pinnobs.exceptions import PinnObsError
from pinnobs.integrator import read_trajectory_csv
from pinnobs.recorders.sqlalchemy import SqlRecorder

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _guarded(action: Callable[[], Any]) -> int:
    try:
        action()
    except ConfigError as error:
        logger.error("configuration error: %s", error)
        return EXIT_CONFIG
    except NumericalError as error:
        logger.error("numerical failure: %s", error)
        return EXIT_NUMERICAL
    except (OSError, SQLAlchemyError) as error:
        logger.error("I/O failure: %s", error)
        return EXIT_IO
    except (PinnObsError, ValueError) as error:
        logger.error("invalid input: %s", error)
        return EXIT_CONFIG
    return EXIT_OK


def _recorders(config: ExperimentConfig) -> list[Recorder]:
    if config.storage.database_url:
        return [SqlRecorder(config.storage.database_url, name="sql")]
    return []


def run_experiment(config_path: Path, overrides: Optional[dict[str, Any]] = None) -> int:
    """Train and evaluate one configured experiment; returns the exit status."""

    def action():
        config = ExperimentConfig.load(config_path, overrides)
        ObserverApplication(_recorders(config)).run(config)

    return _guarded(action)


def run_ablation(grid_config_path: Path, overrides: Optional[dict[str, Any]] = None) -> int:
    """Run an ablation grid; failed cells are reported in ``ablation.csv``."""
    overrides = dict(overrides or {})
    jobs = int(overrides.pop("jobs", None) or 1)

    def action():
        grid = AblationConfig.load(grid_config_path, overrides)
        ObserverApplication().ablate(grid, overrides, jobs=jobs)

    return _guarded(action)


def run_replay(
    config_path: Path, ckpt: Path, overrides: Optional[dict[str, Any]] = None
) -> int:
    """Replay the observer from a parameter checkpoint without training."""

    def action():
        config = ExperimentConfig.load(config_path, overrides)
        ObserverApplication().replay(config, ckpt)

    return _guarded(action)


def run_metrics(truth_csv: Path, estimate_csv: Path) -> int:
    """Print the metrics of an estimate CSV against a truth CSV."""

    def action():
        report = metrics(read_trajectory_csv(truth_csv), read_trajectory_csv(estimate_csv))
        for line in format_metrics(report):
            print(line)

    return _guarded(action)


def run_history(database_url: str, run_id: str) -> int:
    """Print the recorded loss history of a run as CSV."""

    def action():
        entries = ObserverApplication([SqlRecorder(database_url)]).history(run_id)
        write_history(entries, sys.stdout)

    return _guarded(action)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinn-obs", description="Physics-informed neural-network observer experiments."
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_overrides(command: argparse.ArgumentParser):
        command.add_argument("--seed", type=int, help="override the experiment seed")
        command.add_argument("--out", help="override the output directory")
        command.add_argument("--max-iters", type=int, dest="max_iters", help="override max_iters")

    run = commands.add_parser("run", help="train and evaluate one experiment")
    run.add_argument("config", type=Path)
    add_overrides(run)

    ablate = commands.add_parser("ablate", help="run an ablation grid")
    ablate.add_argument("config", type=Path)
    ablate.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    add_overrides(ablate)

    replay = commands.add_parser("replay", help="replay the observer from a checkpoint")
    replay.add_argument("config", type=Path)
    replay.add_argument("--ckpt", type=Path, required=True)
    add_overrides(replay)

    summary = commands.add_parser("metrics", help="compare two trajectory CSVs")
    summary.add_argument("truth", type=Path)
    summary.add_argument("estimate", type=Path)

    history = commands.add_parser("history", help="print the recorded loss history of a run")
    history.add_argument("run", help="run id, the output directory of the run")
    history.add_argument("--database", required=True, help="database URL of the recorder")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "metrics":
        return run_metrics(args.truth, args.estimate)
    if args.command == "history":
        return run_history(args.database, args.run)

    overrides = {"seed": args.seed, "out": args.out, "max_iters": args.max_iters}
    if args.command == "run":
        return run_experiment(args.config, overrides)
    if args.command == "ablate":
        return run_ablation(args.config, {**overrides, "jobs": args.jobs})
    return run_replay(args.config, args.ckpt, overrides)


if __name__ == "__main__":
    sys.exit(main())
