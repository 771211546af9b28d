"""
Physics-informed training of the observer network.

The loss has three terms:

- ``mse0``: distance between the network estimate at ``t0`` and the
  observer's initial estimate (squared by default);
- ``mseg``: mean squared residual of the observer ODE
  ``dx/dt - f(x, t) - B u(t) - L(t) (y - C x)`` over the collocation points;
- ``msey``: mean squared output mismatch ``C x - y`` over the training samples.

Training is full batch with Adam and keeps the best parameters seen.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from dataclasses import field
from enum import Enum
from typing import Any
from typing import Optional

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator

from pinnobs import autodiff as ad
from pinnobs.exceptions import DivergenceError
from pinnobs.exceptions import NumericalError
from pinnobs.exceptions import ShapeError
from pinnobs.integrator import TrainingDataset
from pinnobs.network import LayerSpec
from pinnobs.network import NetworkParams
from pinnobs.network import evaluate
from pinnobs.network import evaluate_with_time_derivative
from pinnobs.network import gain_columns
from pinnobs.network import init_params
from pinnobs.network import state_columns
from pinnobs.records import HistoryEntry
from pinnobs.records import LossBreakdown
from pinnobs.systems import SystemModel

logger = logging.getLogger(__name__)

RELATIVE_IMPROVEMENT = 1e-12


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    w0: float = Field(default=1.0, ge=0)
    w_ode: float = Field(default=1.0, ge=0)
    w_y: float = Field(default=1.0, ge=0)


class Collocation(Enum):
    """Where the ODE residual is penalized."""

    train = "train"
    dense = "dense"


class TrainConfig(BaseModel):
    """
    Hyperparameters of one training run.

    Attributes
    ----------
    spec : LayerSpec
        Network architecture.
    lr : float
        Adam learning rate, strictly positive.
    max_iters : int
        Maximum number of loss evaluations.
    patience : int
        Stop once the best loss has not improved for this many iterations.
        Must not exceed ``max_iters``.
    weights : LossWeights
        Weights of the three loss terms.
    seed : int
        Seed of the parameter initialization.
    collocation : Collocation
        ``train`` puts residual points at the training sample times, ``dense``
        on a uniform grid of ``collocation_points`` over the horizon with
        measurements interpolated between training samples.
    squared_initial_loss : bool
        Use ``||x(t0) - xhat0||^2`` (default) or its square root.
    log_every : int
        Iterations between history entries.
    """

    model_config = ConfigDict(frozen=True)

    spec: LayerSpec
    lr: float = Field(default=1e-3, gt=0)
    max_iters: int = Field(default=200_000, ge=1)
    patience: int = Field(default=20_000, ge=0)
    weights: LossWeights = LossWeights()
    seed: int = 0
    collocation: Collocation = Collocation.train
    collocation_points: int = Field(default=2000, ge=2)
    squared_initial_loss: bool = True
    log_every: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_patience(self) -> TrainConfig:
        if self.patience > self.max_iters:
            raise ValueError(
                f"patience ({self.patience}) must not exceed max_iters ({self.max_iters})"
            )
        return self


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(m=np.zeros(size), v=np.zeros(size))


@dataclass
class TrainResult:
    """
    Outcome of `train`.

    ``best_iteration`` is the first iteration reaching the best loss and
    ``stop_iteration`` the last iteration evaluated; both are reported as the
    convergence iteration of a run.
    """

    params: NetworkParams
    history: list[HistoryEntry] = field(default_factory=list)
    best_loss: float = float("inf")
    best_iteration: int = 0
    iterations: int = 0
    stopped_early: bool = False
    train_time_s: float = 0.0

    @property
    def stop_iteration(self) -> int:
        return self.iterations - 1


def collocation_grid(
    dataset: TrainingDataset, collocation: Collocation, points: int
) -> tuple[np.ndarray, np.ndarray]:
    """Residual times and the measurements used there."""
    if collocation is Collocation.train:
        return dataset.train_times, dataset.train_outputs
    times = np.linspace(dataset.times[0], dataset.times[-1], points)
    outputs = np.column_stack(
        [
            np.interp(times, dataset.train_times, dataset.train_outputs[:, r])
            for r in range(dataset.outputs.shape[1])
        ]
    )
    return times, outputs


def _outputs_of(sys: SystemModel, states: list) -> list:
    """``C x`` row by row, skipping zero coefficients."""
    rows = []
    for r in range(sys.m):
        terms = [sys.C[r, j] * states[j] for j in range(sys.n_x) if sys.C[r, j] != 0.0]
        row = terms[0]
        for term in terms[1:]:
            row = row + term
        rows.append(row)
    return rows


def _residual_columns(dual_output: ad.DualScalar, sys: SystemModel, times, outputs) -> list:
    n_x, m = sys.n_x, sys.m
    states = state_columns(dual_output.value, n_x)
    rates = state_columns(dual_output.deriv, n_x)
    gains = gain_columns(dual_output.value, n_x, m)
    drift = sys.f(states, times)
    forcing = sys.forcing(times)
    estimated = _outputs_of(sys, states)
    innovations = [outputs[:, r] - estimated[r] for r in range(m)]

    columns = []
    for i in range(n_x):
        g = rates[i] - drift[i] - forcing[i]
        for r in range(m):
            g = g - gains[i][r] * innovations[r]
        columns.append(g)
    return columns


def _squared_norm_sum(columns: list):
    total = (columns[0] * columns[0]).sum()
    for column in columns[1:]:
        total = total + (column * column).sum()
    return total


def _loss_terms(
    params: NetworkParams,
    dataset: TrainingDataset,
    sys: SystemModel,
    weights: LossWeights,
    collocation: tuple[np.ndarray, np.ndarray],
    shared_grid: bool,
    squared_initial_loss: bool,
) -> tuple[Any, Any, Any, Any]:
    if dataset.train_idx.size == 0:
        raise ValueError("the training set is empty")
    if dataset.train_idx[0] != 0:
        raise ValueError("the training set must contain the initial sample")

    times, measured = collocation
    dual = evaluate_with_time_derivative(params, times)
    fit = dual.value if shared_grid else evaluate(params, dataset.train_times)

    states = state_columns(fit, sys.n_x)
    offsets = [states[i][0] - dataset.xhat0[i] for i in range(sys.n_x)]
    mse0 = _squared_norm_sum(offsets)
    if not squared_initial_loss:
        mse0 = ad.sqrt(mse0)

    residual_columns = _residual_columns(dual, sys, times, measured)
    mseg = _squared_norm_sum(residual_columns) / float(times.size)

    train_outputs = dataset.train_outputs
    mismatches = [row - train_outputs[:, r] for r, row in enumerate(_outputs_of(sys, states))]
    msey = _squared_norm_sum(mismatches) / float(train_outputs.shape[0])

    total = weights.w0 * mse0 + weights.w_ode * mseg + weights.w_y * msey
    return total, mse0, mseg, msey


def _breakdown(terms: tuple[Any, Any, Any, Any]) -> LossBreakdown:
    values = [float(np.asarray(ad._value(term))) for term in terms]
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite loss terms {values}")
    total, mse0, mseg, msey = values
    return LossBreakdown(total=total, mse0=mse0, mseg=mseg, msey=msey)


def residual(params: NetworkParams, sys: SystemModel, t: float, y) -> np.ndarray:
    """
    Observer-ODE residual at one time, given the measurement ``y(t)``.

    Raises
    ------
    ShapeError
        If ``y`` does not have ``m`` entries.
    NumericalError
        If the residual is not finite.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != sys.m:
        raise ShapeError(f"{sys.name} measurements have {sys.m} entries, got {y.size}")
    if params.spec.output_width != sys.n_x + sys.n_x * sys.m:
        raise ShapeError(f"network output width does not match {sys.name}")
    times = np.array([float(t)])
    dual = evaluate_with_time_derivative(params, times)
    columns = _residual_columns(dual, sys, times, y.reshape(1, -1))
    g = np.array([float(np.asarray(column).reshape(-1)[0]) for column in columns])
    if not np.all(np.isfinite(g)):
        raise NumericalError(f"non-finite residual at t={t}")
    return g


def loss(
    params: NetworkParams,
    dataset: TrainingDataset,
    sys: SystemModel,
    weights: Optional[LossWeights] = None,
    collocation: Collocation = Collocation.train,
    collocation_points: int = 2000,
    squared_initial_loss: bool = True,
) -> LossBreakdown:
    """
    Composite loss of plain (untaped) parameters.

    Raises
    ------
    ValueError
        If the training set is empty or misses the initial sample.
    NumericalError
        If a term is not finite.
    """
    weights = weights or LossWeights()
    grid = collocation_grid(dataset, collocation, collocation_points)
    terms = _loss_terms(
        params,
        dataset,
        sys,
        weights,
        grid,
        collocation is Collocation.train,
        squared_initial_loss,
    )
    return _breakdown(terms)


def loss_and_grad(
    flat: np.ndarray,
    spec: LayerSpec,
    dataset: TrainingDataset,
    sys: SystemModel,
    config: TrainConfig,
    grid: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> tuple[LossBreakdown, np.ndarray]:
    """
    Loss breakdown and its gradient with respect to the flat parameters.

    One tape records the forward pass, the time derivative included, and is
    consumed by the backward pass.

    Raises
    ------
    NumericalError
        If the loss or an adjoint is not finite.
    """
    if grid is None:
        grid = collocation_grid(dataset, config.collocation, config.collocation_points)
    tape = ad.GradientTape()
    theta = tape.variable(flat, name="params")
    params = NetworkParams.from_flat(spec, theta)
    terms = _loss_terms(
        params,
        dataset,
        sys,
        config.weights,
        grid,
        config.collocation is Collocation.train,
        config.squared_initial_loss,
    )
    breakdown = _breakdown(terms)
    return breakdown, ad.grad(terms[0], [theta])


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam update. Inputs are left untouched.

    Raises
    ------
    ShapeError
        If parameters, gradient and moments differ in shape.
    NumericalError
        If the gradient is not finite.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ShapeError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.m.shape}/{state.v.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite gradient")

    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    updated = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, AdamState(
        m=m, v=v, step=step, beta1=state.beta1, beta2=state.beta2, eps=state.eps
    )


def train(config: TrainConfig, dataset: TrainingDataset, sys: SystemModel) -> TrainResult:
    """
    Full-batch Adam on the composite loss with early stopping.

    An iteration evaluates the loss at the current parameters, updates the
    best snapshot and takes one Adam step. A loss below
    ``best * (1 - 1e-12)`` counts as an improvement. The run stops after
    ``max_iters`` iterations, or on a non-improving iteration once the best
    loss has not improved for ``patience`` iterations.

    Returns
    -------
    TrainResult
        The best parameters, not the last ones.

    Raises
    ------
    DivergenceError
        If the loss or its gradient stops being finite; ``iteration`` tells when.
    """
    if config.spec.output_width != sys.n_x + sys.n_x * sys.m:
        raise ShapeError(
            f"network output width {config.spec.output_width} does not fit {sys.name}"
        )
    flat = init_params(config.spec, config.seed).flatten()
    state = AdamState.zeros(flat.size)
    grid = collocation_grid(dataset, config.collocation, config.collocation_points)

    best_loss = float("inf")
    best_flat = flat.copy()
    best_iteration = 0
    stale = 0
    stopped_early = False
    entries: dict[int, HistoryEntry] = {}
    best_entry: Optional[HistoryEntry] = None
    logger.info(
        "training %s: %d parameters, %d train samples, %d collocation points",
        sys.name,
        flat.size,
        dataset.train_idx.size,
        grid[0].size,
    )

    started = time.perf_counter()
    iteration = 0
    for iteration in range(config.max_iters):
        try:
            breakdown, gradient = loss_and_grad(flat, config.spec, dataset, sys, config, grid)
        except NumericalError as error:
            logger.error("%s diverged at iteration %d: %s", sys.name, iteration, error)
            raise DivergenceError(
                f"training diverged at iteration {iteration}: {error}", iteration=iteration
            ) from error

        improved = breakdown.total < best_loss * (1.0 - RELATIVE_IMPROVEMENT)
        if improved:
            best_loss = breakdown.total
            best_flat = flat.copy()
            best_iteration = iteration
            best_entry = HistoryEntry.from_breakdown(iteration, breakdown)
            stale = 0
        else:
            stale += 1

        last = iteration == config.max_iters - 1
        stopping = not improved and stale >= config.patience
        if iteration % config.log_every == 0 or last or stopping:
            entries[iteration] = HistoryEntry.from_breakdown(iteration, breakdown)
        if iteration % config.log_every == 0:
            logger.info(
                "iter %d total %.6e (mse0 %.3e, mseg %.3e, msey %.3e) best %.6e",
                iteration,
                breakdown.total,
                breakdown.mse0,
                breakdown.mseg,
                breakdown.msey,
                best_loss,
            )
        if stopping:
            stopped_early = True
            logger.info(
                "early stop at iteration %d: no improvement since iteration %d",
                iteration,
                best_iteration,
            )
            break

        flat, state = adam_step(flat, gradient, state, config.lr)

    if best_entry is not None:
        entries.setdefault(best_entry.iteration, best_entry)
    train_time = time.perf_counter() - started
    logger.info(
        "finished %s after %d iterations in %.2fs, best loss %.6e at iteration %d",
        sys.name,
        iteration + 1,
        train_time,
        best_loss,
        best_iteration,
    )
    return TrainResult(
        params=NetworkParams.from_flat(config.spec, best_flat, seed=config.seed),
        history=[entries[key] for key in sorted(entries)],
        best_loss=best_loss,
        best_iteration=best_iteration,
        iterations=iteration + 1,
        stopped_early=stopped_early,
        train_time_s=train_time,
    )
