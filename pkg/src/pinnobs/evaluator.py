"""Test-time observer replay and error metrics."""

from __future__ import annotations

import logging
import time
from functools import lru_cache
from pathlib import Path
from typing import Callable
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field

from pinnobs.exceptions import GridMismatchError
from pinnobs.exceptions import OutOfRangeError
from pinnobs.exceptions import ShapeError
from pinnobs.integrator import Trajectory
from pinnobs.integrator import grid
from pinnobs.integrator import integrate
from pinnobs.integrator import write_series_csv
from pinnobs.network import NetworkParams
from pinnobs.network import evaluate
from pinnobs.network import forward
from pinnobs.systems import SystemModel
from pinnobs.systems import dynamics

logger = logging.getLogger(__name__)

SMAPE_FLOOR = 1e-12
RANGE_TOLERANCE = 1e-9
INFERENCE_REPEATS = 1000


class StateMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    mae: float = Field(ge=0)
    mse: float = Field(ge=0)
    rmse: float = Field(ge=0)
    smape_percent: float = Field(ge=0, le=200)


class MetricsReport(BaseModel):
    """
    Errors of an estimate against the truth.

    Attributes
    ----------
    overall : StateMetrics
        Aggregated over every state component and time point.
    per_state : dict[str, StateMetrics]
        Keyed ``x1``, ``x2``, ...
    unmeasured : StateMetrics or None
        Aggregated over the components that ``C`` does not read, when the
        measured components are known and some remain.
    per_time_error : numpy.ndarray
        ``|x_i(t) - xhat_i(t)|``, shape ``(N, n_x)``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    overall: StateMetrics
    per_state: dict[str, StateMetrics]
    unmeasured: Optional[StateMetrics] = None
    per_time_error: np.ndarray

    @property
    def mae(self) -> float:
        return self.overall.mae

    @property
    def mse(self) -> float:
        return self.overall.mse

    @property
    def rmse(self) -> float:
        return self.overall.rmse

    @property
    def smape_percent(self) -> float:
        return self.overall.smape_percent


class LinearInterpolant:
    """
    Piecewise-linear measurement function ``y(t)`` over sampled outputs.

    Parameters
    ----------
    times : array_like
        ``(N,)`` increasing sample times.
    values : array_like
        ``(N, m)`` samples.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        if self.times.ndim != 1 or self.values.shape[0] != self.times.size or self.times.size == 0:
            raise ShapeError(
                f"interpolant needs (N,) times and (N, m) values, "
                f"got {self.times.shape} and {self.values.shape}"
            )
        span = self.times[-1] - self.times[0]
        self.tolerance = RANGE_TOLERANCE * span

    def __call__(self, t: float) -> np.ndarray:
        if t < self.times[0] - self.tolerance or t > self.times[-1] + self.tolerance:
            raise OutOfRangeError(
                f"measurement requested at t={t} outside [{self.times[0]}, {self.times[-1]}]"
            )
        return np.array(
            [np.interp(t, self.times, self.values[:, r]) for r in range(self.values.shape[1])]
        )


def replay_observer(
    sys: SystemModel,
    params: NetworkParams,
    xhat0: Sequence[float],
    measurements: Callable[[float], np.ndarray],
    T: float,
    dt: float,
) -> Trajectory:
    """
    Integrate the observer ``x' = f(x, t) + B u(t) + L(t) (y(t) - C x)`` with RK4.

    The gain ``L(t)`` is evaluated by the trained network at every solver
    stage time. With a gain head that is identically zero the result equals
    `pinnobs.integrator.simulate` from ``xhat0``.

    Raises
    ------
    OutOfRangeError
        If ``measurements`` does not cover ``[0, T]``.
    TrajectoryEscapeError
        If the estimate blows up.
    """
    xhat0 = np.asarray(xhat0, dtype=np.float64)
    if xhat0.shape != (sys.n_x,):
        raise ShapeError(f"{sys.name} expects an initial estimate of length {sys.n_x}")
    times = grid(T, dt)

    @lru_cache(maxsize=8)
    def gain(t: float) -> np.ndarray:
        return forward(params, t, sys.n_x, sys.m)[1].entries

    def rhs(x, t):
        innovation = np.asarray(measurements(t), dtype=np.float64) - sys.C @ x
        return dynamics(sys, x, t) + sys.forcing(t) + gain(float(t)) @ innovation

    trajectory = integrate(rhs, xhat0, times, dt, sys.substeps)
    logger.debug("replayed observer for %s over %d points", sys.name, times.size)
    return trajectory


def _state_metrics(truth: np.ndarray, estimate: np.ndarray) -> StateMetrics:
    error = estimate - truth
    absolute = np.abs(error)
    mse = float(np.mean(error * error))
    scale = np.abs(truth) + np.abs(estimate)
    terms = np.zeros_like(absolute)
    mask = scale >= SMAPE_FLOOR
    terms[mask] = absolute[mask] / (scale[mask] / 2.0)
    return StateMetrics(
        mae=float(np.mean(absolute)),
        mse=mse,
        rmse=float(np.sqrt(mse)),
        smape_percent=float(100.0 * np.mean(terms)),
    )


def metrics(
    true_traj: Trajectory, est_traj: Trajectory, measured: Optional[Sequence[int]] = None
) -> MetricsReport:
    """
    MAE, MSE, RMSE and SMAPE of an estimate, overall and per state.

    SMAPE terms where ``|x| + |xhat| < 1e-12`` count as zero.

    Parameters
    ----------
    true_traj, est_traj : Trajectory
        Truth and estimate on the same grid.
    measured : sequence of int, optional
        Indices of measured components; enables the ``unmeasured`` aggregate.

    Raises
    ------
    GridMismatchError
        If the grids or state dimensions differ.
    """
    if true_traj.times.shape != est_traj.times.shape or not np.array_equal(
        true_traj.times, est_traj.times
    ):
        raise GridMismatchError("truth and estimate are not on the same time grid")
    if true_traj.states.shape != est_traj.states.shape:
        raise GridMismatchError(
            f"state shapes differ: {true_traj.states.shape} vs {est_traj.states.shape}"
        )
    truth, estimate = true_traj.states, est_traj.states

    per_state = {
        f"x{i + 1}": _state_metrics(truth[:, i], estimate[:, i]) for i in range(truth.shape[1])
    }
    unmeasured = None
    if measured is not None:
        hidden = [i for i in range(truth.shape[1]) if i not in set(measured)]
        if hidden:
            unmeasured = _state_metrics(truth[:, hidden], estimate[:, hidden])
    return MetricsReport(
        overall=_state_metrics(truth, estimate),
        per_state=per_state,
        unmeasured=unmeasured,
        per_time_error=np.abs(truth - estimate),
    )


def prediction_metrics(
    params: NetworkParams,
    truth: Trajectory,
    indices: Optional[Sequence[int]] = None,
    measured: Optional[Sequence[int]] = None,
) -> MetricsReport:
    """Metrics of the direct network estimate ``xhat(t)`` at the given grid indices."""
    indices = np.arange(len(truth)) if indices is None else np.asarray(indices)
    times = truth.times[indices]
    predicted = np.asarray(evaluate(params, times))[:, : truth.n_x]
    return metrics(
        Trajectory(times=times, states=truth.states[indices]),
        Trajectory(times=times, states=predicted),
        measured=measured,
    )


def inference_time_ms(params: NetworkParams, repeats: int = INFERENCE_REPEATS) -> float:
    """Median wall-clock time of a single-time forward pass, in milliseconds."""
    if repeats < 1:
        raise ValueError(f"repeats must be positive, got {repeats}")
    durations = np.empty(repeats)
    for k in range(repeats):
        started = time.perf_counter()
        evaluate(params, 0.5)
        durations[k] = time.perf_counter() - started
    return float(np.median(durations) * 1e3)


def format_metrics(report: MetricsReport, prefix: str = "") -> list[str]:
    """``key=value`` lines, values with 17 significant digits."""
    lines = []

    def add(suffix: str, values: StateMetrics):
        for key, value in values.model_dump().items():
            lines.append(f"{prefix}{key}{suffix}={value:.17g}")

    add("", report.overall)
    for name, values in report.per_state.items():
        add(f"_{name}", values)
    if report.unmeasured is not None:
        add("_unmeasured", report.unmeasured)
    return lines


def write_metrics(
    report: MetricsReport, path: Union[str, Path], prefix: str = "", append: bool = False
) -> Path:
    path = Path(path)
    with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as stream:
        for line in format_metrics(report, prefix):
            stream.write(line + "\n")
    return path


def write_error_csv(true_traj: Trajectory, est_traj: Trajectory, path: Union[str, Path]) -> Path:
    if not np.array_equal(true_traj.times, est_traj.times):
        raise GridMismatchError("truth and estimate are not on the same time grid")
    return write_series_csv(
        true_traj.times, np.abs(true_traj.states - est_traj.states), path, prefix="e"
    )
