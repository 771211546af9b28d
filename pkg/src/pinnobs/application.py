from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any
from typing import Optional
from typing import TextIO

from pinnobs.abc import Recorder
from pinnobs.config import AblationConfig
from pinnobs.config import ExperimentConfig
from pinnobs.evaluator import LinearInterpolant
from pinnobs.evaluator import MetricsReport
from pinnobs.evaluator import format_metrics
from pinnobs.evaluator import inference_time_ms
from pinnobs.evaluator import metrics
from pinnobs.evaluator import prediction_metrics
from pinnobs.evaluator import replay_observer
from pinnobs.evaluator import write_error_csv
from pinnobs.exceptions import RunNotFoundError
from pinnobs.exceptions import ShapeError
from pinnobs.integrator import Trajectory
from pinnobs.integrator import build_dataset
from pinnobs.integrator import simulate
from pinnobs.integrator import write_trajectory_csv
from pinnobs.network import NetworkParams
from pinnobs.network import load_checkpoint
from pinnobs.network import save_checkpoint
from pinnobs.records import CellResult
from pinnobs.records import HistoryEntry
from pinnobs.recorders.sqlalchemy import SqlRecorder
from pinnobs.systems import SystemModel
from pinnobs.trainer import TrainResult
from pinnobs.trainer import train

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iter", "total", "mse0", "mseg", "msey")
CELL_COLUMNS = (
    "cell_id",
    "status",
    "rmse",
    "mae",
    "inference_ms",
    "train_time_s",
    "convergence_iteration",
    "stop_iteration",
    "best_loss",
)


@dataclass
class RunSummary:
    """What one experiment produced. ``result`` is ``None`` for replay-only runs."""

    config: ExperimentConfig
    system: SystemModel
    params: NetworkParams
    truth: Trajectory
    estimate: Trajectory
    replay: MetricsReport
    prediction: MetricsReport
    output_dir: Path
    result: Optional[TrainResult] = None
    inference_ms: Optional[float] = None


def _format_number(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_history(entries: list[HistoryEntry], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for entry in entries:
        losses = (entry.total, entry.mse0, entry.mseg, entry.msey)
        writer.writerow([entry.iteration] + [_format_number(value) for value in losses])


def write_history_csv(entries: list[HistoryEntry], path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as stream:
        write_history(entries, stream)
    return path


def write_cells_csv(rows: list[CellResult], path: Path) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CELL_COLUMNS)
        for row in rows:
            values = row.model_dump()
            writer.writerow([_format_number(values[column]) for column in CELL_COLUMNS])
    return path


def _write_lines(path: Path, lines: list[str]) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as stream:
        for line in lines:
            stream.write(line + "\n")
    return path


class ObserverApplication:
    """
    Runs observer experiments and hands their histories to the recorders.

    Parameters
    ----------
    recorders : list of Recorder
        Every recorder receives each training history and ablation grid.
    """

    def __init__(self, recorders: Optional[list[Recorder]] = None):
        self.recorders = recorders or []

    def _prepare(self, config: ExperimentConfig):
        sys = config.build_system()
        out = config.output_dir
        out.mkdir(parents=True, exist_ok=True)
        _write_lines(out / "manifest.txt", [config.resolved(sys).manifest().rstrip("\n")])

        logger.info("simulating %s over [0, %g] with dt=%g", sys.name, sys.horizon, sys.dt)
        truth = simulate(sys)
        dataset = build_dataset(truth, sys, config.split_seed, config.experiment.train_fraction)
        write_trajectory_csv(truth, out / "truth.csv")
        return sys, out, truth, dataset

    def _evaluate(self, sys, params, truth, dataset, out):
        logger.info("replaying the observer from xhat0=%s", sys.xhat0.tolist())
        measurements = LinearInterpolant(dataset.times, dataset.outputs)
        estimate = replay_observer(sys, params, sys.xhat0, measurements, sys.horizon, sys.dt)
        replay = metrics(truth, estimate, measured=sys.measured_states)
        prediction = prediction_metrics(
            params, truth, dataset.test_idx, measured=sys.measured_states
        )
        write_trajectory_csv(estimate, out / "estimate.csv")
        write_error_csv(truth, estimate, out / "errors.csv")
        return estimate, replay, prediction

    def run(self, config: ExperimentConfig) -> RunSummary:
        """
        Simulate, train, replay and write every artifact of one experiment.

        Artifacts are ``truth.csv``, ``estimate.csv``, ``errors.csv``,
        ``history.csv``, ``metrics.txt``, ``params.ckpt``, ``manifest.txt``
        and ``timing.txt``. All but the last are identical across reruns of
        the same configuration.
        """
        sys, out, truth, dataset = self._prepare(config)
        result = self._train(config, sys, dataset, out)
        return self._report(config, sys, out, truth, dataset, result)

    def _train(self, config, sys, dataset, out) -> TrainResult:
        result = train(config.train_config(sys), dataset, sys)
        save_checkpoint(result.params, out / "params.ckpt")
        write_history_csv(result.history, out / "history.csv")
        for recorder in self.recorders:
            recorder.save_history(str(out), result.history)
        return result

    def _report(self, config, sys, out, truth, dataset, result: TrainResult) -> RunSummary:
        estimate, replay, prediction = self._evaluate(sys, result.params, truth, dataset, out)
        _write_lines(
            out / "metrics.txt",
            format_metrics(replay)
            + format_metrics(prediction, prefix="prediction_")
            + [
                f"best_loss={result.best_loss:.17g}",
                f"best_iteration={result.best_iteration}",
                f"stop_iteration={result.stop_iteration}",
                f"stopped_early={str(result.stopped_early).lower()}",
            ],
        )
        inference = inference_time_ms(result.params)
        _write_lines(
            out / "timing.txt",
            [f"train_time_s={result.train_time_s:.6f}", f"inference_ms={inference:.6f}"],
        )
        logger.info(
            "run written to %s: replay rmse %.3e, prediction rmse %.3e",
            out,
            replay.rmse,
            prediction.rmse,
        )
        return RunSummary(
            config=config,
            system=sys,
            params=result.params,
            truth=truth,
            estimate=estimate,
            replay=replay,
            prediction=prediction,
            output_dir=out,
            result=result,
            inference_ms=inference,
        )

    def replay(self, config: ExperimentConfig, ckpt: Path) -> RunSummary:
        """Replay the observer with parameters from a checkpoint, without training."""
        params = load_checkpoint(ckpt)
        sys, out, truth, dataset = self._prepare(config)
        if params.spec.output_width != sys.n_x + sys.n_x * sys.m:
            raise ShapeError(f"checkpoint {ckpt} does not fit system {sys.name}")
        estimate, replay, prediction = self._evaluate(sys, params, truth, dataset, out)
        _write_lines(
            out / "metrics.txt",
            format_metrics(replay) + format_metrics(prediction, prefix="prediction_"),
        )
        return RunSummary(
            config=config,
            system=sys,
            params=params,
            truth=truth,
            estimate=estimate,
            replay=replay,
            prediction=prediction,
            output_dir=out,
        )

    def ablate(
        self, grid: AblationConfig, overrides: Optional[dict[str, Any]] = None, jobs: int = 1
    ) -> list[CellResult]:
        """
        Run every cell of a grid, each in its own subdirectory, and write ``ablation.csv``.

        A failing cell does not stop the grid; its row keeps the error in
        ``status``.
        """
        base = ExperimentConfig.load(grid.base, overrides)
        out = grid.output_dir(base)
        out.mkdir(parents=True, exist_ok=True)
        tasks = [
            (
                cell.cell_id,
                base.with_updates(**cell.updates, experiment={"out": str(out / cell.cell_id)}),
            )
            for cell in grid.cells()
        ]
        logger.info("ablation over %s: %d cells, %d jobs", grid.axis, len(tasks), jobs)
        if jobs > 1:
            with Pool(jobs) as pool:
                rows = pool.map(run_cell, tasks)
        else:
            rows = [run_cell(task) for task in tasks]

        write_cells_csv(rows, out / "ablation.csv")
        recorders = list(self.recorders)
        if grid.database_url:
            recorders.append(SqlRecorder(grid.database_url, name="ablation"))
        for recorder in recorders:
            recorder.save_cells(str(out), rows)
        failed = [row.cell_id for row in rows if not row.ok]
        if failed:
            logger.warning("%d cells failed: %s", len(failed), ", ".join(failed))
        return rows

    def history(self, run_id: str) -> list[HistoryEntry]:
        """
        The loss history of a run, from the first recorder holding it.

        Raises
        ------
        RunNotFoundError
            If no recorder holds the run.
        """
        for recorder in self.recorders:
            try:
                return recorder.get_history(run_id)
            except RunNotFoundError:
                continue
        raise RunNotFoundError(f"no recorder holds a history for run {run_id!r}")


def run_cell(task: tuple[str, ExperimentConfig]) -> CellResult:
    """
    Run one ablation cell; any error becomes the row's status.

    Training numbers are kept when only the replay fails.
    """
    cell_id, config = task
    row: dict[str, Any] = {"cell_id": cell_id}
    application = ObserverApplication()
    try:
        sys, out, truth, dataset = application._prepare(config)
        result = application._train(config, sys, dataset, out)
        row.update(
            train_time_s=result.train_time_s,
            convergence_iteration=result.best_iteration,
            stop_iteration=result.stop_iteration,
            best_loss=result.best_loss,
        )
        summary = application._report(config, sys, out, truth, dataset, result)
    except Exception as error:
        logger.error("cell %s failed: %s", cell_id, error)
        return CellResult(**row, status=f"{type(error).__name__}: {error}")
    return CellResult(
        **row,
        rmse=summary.prediction.rmse,
        mae=summary.prediction.mae,
        inference_ms=summary.inference_ms,
    )
