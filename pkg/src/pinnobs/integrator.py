"""Fixed-step fourth-order Runge-Kutta integration and training-data assembly."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np

from pinnobs.exceptions import ShapeError
from pinnobs.exceptions import TrajectoryEscapeError
from pinnobs.systems import SystemModel
from pinnobs.systems import dynamics

logger = logging.getLogger(__name__)

MAX_GRID_POINTS = 10_000_000
GRID_SLACK = 1e-9
DEFAULT_TRAIN_FRACTION = 0.6

RightHandSide = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    States on a time grid.

    Attributes
    ----------
    times : numpy.ndarray
        ``(N,)`` strictly increasing grid starting at 0.
    states : numpy.ndarray
        ``(N, n_x)`` state matrix, one row per grid point.
    """

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.float64)
        if times.ndim != 1 or states.ndim != 2 or states.shape[0] != times.size:
            raise ShapeError(
                f"trajectory needs (N,) times and (N, n_x) states, "
                f"got {times.shape} and {states.shape}"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_x(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True, eq=False)
class TrainingDataset:
    """
    Output samples ``(t_i, y_i)`` with a train/test split.

    Only measurements are carried: the states that generated them never reach
    the training loss.

    Attributes
    ----------
    times : numpy.ndarray
        ``(N,)`` sample times.
    outputs : numpy.ndarray
        ``(N, m)`` measurements ``y_i = C x(t_i)``.
    xhat0 : numpy.ndarray
        Observer initial estimate, anchoring the initial-state loss term.
    train_idx, test_idx : numpy.ndarray
        Sorted, disjoint index sets covering ``0..N-1``. Index 0 is in train.
    """

    times: np.ndarray
    outputs: np.ndarray
    xhat0: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def train_times(self) -> np.ndarray:
        return self.times[self.train_idx]

    @property
    def train_outputs(self) -> np.ndarray:
        return self.outputs[self.train_idx]


def rk4_step(f: RightHandSide, x, t: float, dt: float) -> np.ndarray:
    """
    One classical Runge-Kutta step.

    Parameters
    ----------
    f : callable
        ``f(x, t)`` returning the state derivative.
    x : array_like
        State at ``t``.
    t, dt : float
        Current time and step, ``dt > 0``.

    Raises
    ------
    ValueError
        If ``dt`` is not positive.
    TrajectoryEscapeError
        If a stage value is not finite.
    """
    if dt <= 0:
        raise ValueError(f"step must be positive, got {dt}")
    x = np.asarray(x, dtype=np.float64)
    half = 0.5 * dt
    k1 = np.asarray(f(x, t), dtype=np.float64)
    k2 = np.asarray(f(x + half * k1, t + half), dtype=np.float64)
    k3 = np.asarray(f(x + half * k2, t + half), dtype=np.float64)
    k4 = np.asarray(f(x + dt * k3, t + dt), dtype=np.float64)
    for stage in (k1, k2, k3, k4):
        if not np.all(np.isfinite(stage)):
            raise TrajectoryEscapeError(f"non-finite stage value at t={t}", time=t)
    return x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def grid(T: float, dt: float) -> np.ndarray:
    """
    ``floor(T / dt) + 1`` uniform points from 0, tolerant to representation error.

    Raises
    ------
    ValueError
        On a negative horizon, a non-positive step or a grid above the size limit.
    """
    if T < 0:
        raise ValueError(f"horizon must be non-negative, got {T}")
    if dt <= 0:
        raise ValueError(f"step must be positive, got {dt}")
    count = int(np.floor(T / dt + GRID_SLACK)) + 1
    if count > MAX_GRID_POINTS:
        raise ValueError(f"{count} grid points exceed the limit of {MAX_GRID_POINTS}")
    return np.arange(count) * dt


def integrate(
    f: RightHandSide, x0, times: np.ndarray, dt: float, substeps: int = 1
) -> Trajectory:
    """
    Step ``f`` with RK4 along ``times``, which must be spaced by ``dt``.

    Each interval is covered by ``substeps`` equal RK4 steps; only the grid
    points are stored.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be positive, got {substeps}")
    h = dt / substeps
    states = np.empty((times.size, np.size(x0)))
    states[0] = x0
    for k in range(times.size - 1):
        x = states[k]
        for j in range(substeps):
            x = rk4_step(f, x, times[k] + j * h, h)
        states[k + 1] = x
        if not np.all(np.isfinite(states[k + 1])):
            raise TrajectoryEscapeError(
                f"state left the finite range at t={times[k + 1]}", time=times[k + 1]
            )
    return Trajectory(times=times, states=states)


def simulate(
    sys: SystemModel,
    x0: Optional[Sequence[float]] = None,
    T: Optional[float] = None,
    dt: Optional[float] = None,
) -> Trajectory:
    """
    Integrate ``x' = f(x, t) + B u(t)`` from ``x0``.

    Parameters
    ----------
    sys : SystemModel
        The plant.
    x0 : array_like, optional
        Initial state, defaults to ``sys.x0``.
    T, dt : float, optional
        Horizon and sampling step, default to the system's own. The
        system's ``substeps`` RK4 steps are taken per sampling step.

    Returns
    -------
    Trajectory
        ``floor(T / dt) + 1`` points; ``T = 0`` gives the single point ``x0``.

    Raises
    ------
    TrajectoryEscapeError
        If the state blows up; ``time`` holds the failing time.
    """
    x0 = sys.x0 if x0 is None else np.asarray(x0, dtype=np.float64)
    T = sys.horizon if T is None else T
    dt = sys.dt if dt is None else dt
    if np.shape(x0) != (sys.n_x,):
        raise ShapeError(f"{sys.name} expects an initial state of length {sys.n_x}")
    times = grid(T, dt)

    def rhs(x, t):
        return dynamics(sys, x, t) + sys.forcing(t)

    trajectory = integrate(rhs, x0, times, dt, sys.substeps)
    logger.debug("simulated %s over %d points", sys.name, times.size)
    return trajectory


def build_dataset(
    traj: Trajectory,
    sys: SystemModel,
    split_seed: int,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
) -> TrainingDataset:
    """
    Sample the outputs of a trajectory and split them into train and test sets.

    The first sample is always a training sample; the remaining indices are
    shuffled with ``numpy.random.default_rng(split_seed)``.
    """
    n = len(traj)
    if n == 0:
        raise ValueError("cannot build a dataset from an empty trajectory")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train fraction must lie in (0, 1], got {train_fraction}")
    n_train = min(n, max(1, int(round(train_fraction * n))))

    rng = np.random.default_rng(split_seed)
    others = rng.permutation(np.arange(1, n))
    train_idx = np.sort(np.concatenate([[0], others[: n_train - 1]])).astype(np.int64)
    test_idx = np.sort(others[n_train - 1 :]).astype(np.int64)

    return TrainingDataset(
        times=traj.times.copy(),
        outputs=traj.states @ sys.C.T,
        xhat0=sys.xhat0.copy(),
        train_idx=train_idx,
        test_idx=test_idx,
    )


def write_series_csv(
    times: np.ndarray, values: np.ndarray, path: Union[str, Path], prefix: str = "x"
) -> Path:
    """Write ``t,<prefix>1,...`` columns with 17 significant digits and LF line endings."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    header = ["t"] + [f"{prefix}{i + 1}" for i in range(values.shape[1])]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in np.column_stack([times, values]):
            writer.writerow([format(float(value), ".17g") for value in row])
    return path


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> Path:
    return write_series_csv(traj.times, traj.states, path, prefix="x")


def read_trajectory_csv(path: Union[str, Path]) -> Trajectory:
    with Path(path).open(newline="", encoding="utf-8") as stream:
        rows = list(csv.reader(stream))[1:]
    table = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    return Trajectory(times=table[:, 0], states=table[:, 1:])
