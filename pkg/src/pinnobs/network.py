"""
Observer network: one MLP maps a scalar time to the state estimate and the
flattened observer gain.

The output layer is split in two heads. The first ``n_x`` outputs are the
state estimate, the remaining ``n_x * m`` outputs are the gain coefficients,
reshaped row-major into an ``n_x x m`` matrix.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Optional
from typing import Union

import numpy as np
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import field_validator

from pinnobs import autodiff as ad
from pinnobs.exceptions import ConfigError
from pinnobs.exceptions import ShapeError
from pinnobs.transcoders import TranscoderStore

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pinn-obs-checkpoint"
CHECKPOINT_VERSION = 1


class Activation(Enum):
    tanh = "tanh"
    relu = "relu"
    sigmoid = "sigmoid"
    sine = "sine"

    def get_function(self) -> Callable[[Any], Any]:
        """
        Returns the hidden-layer nonlinearity for this activation.

        The returned function dispatches on its argument, so it applies to
        plain arrays, tape variables and dual numbers alike.

        Returns
        -------
        Callable
            One of the generic functions of `pinnobs.autodiff`.
        """
        return {
            Activation.tanh: ad.tanh,
            Activation.relu: ad.relu,
            Activation.sigmoid: ad.sigmoid,
            Activation.sine: ad.sin,
        }[self]


class LayerSpec(BaseModel):
    """
    Layer widths ``(l0, l1, ..., lk)`` and the hidden activation.

    ``l0`` is always 1 (the time input); ``lk`` is the width of both output
    heads together.
    """

    model_config = ConfigDict(frozen=True)

    widths: tuple[int, ...]
    activation: Activation = Activation.tanh

    @field_validator("widths")
    @classmethod
    def _check_widths(cls, widths: tuple[int, ...]) -> tuple[int, ...]:
        if len(widths) < 2:
            raise ValueError("a network needs at least an input and an output layer")
        if widths[0] != 1:
            raise ValueError(f"the input layer takes the scalar time, got width {widths[0]}")
        if any(width < 1 for width in widths):
            raise ValueError(f"every layer width must be at least 1, got {widths}")
        return widths

    @classmethod
    def for_system(
        cls,
        n_x: int,
        m: int,
        depth: int,
        width: int,
        activation: Union[Activation, str] = Activation.tanh,
    ) -> LayerSpec:
        return cls(
            widths=(1, *([width] * depth), n_x + n_x * m),
            activation=Activation(activation),
        )

    @property
    def output_width(self) -> int:
        return self.widths[-1]

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        """Shapes of ``W1, b1, W2, b2, ...`` in flattening order."""
        shapes: list[tuple[int, ...]] = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            shapes.append((fan_out, fan_in))
            shapes.append((fan_out,))
        return shapes


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """
    Weights and biases of an observer network.

    Attributes
    ----------
    spec : LayerSpec
        Architecture the arrays belong to.
    weights : tuple
        ``W^j`` of shape ``(l_j, l_{j-1})``. Plain arrays, or tape variables
        while a loss gradient is being recorded.
    biases : tuple
        ``b^j`` of shape ``(l_j,)``.
    seed : int or None
        Seed used at initialization, kept for bookkeeping.
    """

    spec: LayerSpec
    weights: tuple
    biases: tuple
    seed: Optional[int] = None

    def arrays(self) -> list:
        """Parameters in flattening order ``W1, b1, W2, b2, ...``."""
        interleaved = []
        for weight, bias in zip(self.weights, self.biases):
            interleaved.extend((weight, bias))
        return interleaved

    @property
    def parameter_count(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.spec.shapes)

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.ravel(np.asarray(array)) for array in self.arrays()])

    @classmethod
    def from_flat(
        cls, spec: LayerSpec, vector: Union[np.ndarray, ad.Variable], seed: Optional[int] = None
    ) -> NetworkParams:
        """
        Rebuild structured parameters from a flat vector.

        Parameters
        ----------
        spec : LayerSpec
            Target architecture.
        vector : numpy.ndarray or Variable
            Flat parameters. A tape variable yields weights that are tape
            variables, so a loss built from them can be differentiated.
        seed : int, optional
            Seed carried over to the result.

        Raises
        ------
        ShapeError
            If the vector length does not match the architecture.
        """
        expected = sum(int(np.prod(shape)) for shape in spec.shapes)
        if np.ndim(ad._value(vector)) != 1 or np.size(ad._value(vector)) != expected:
            raise ShapeError(
                f"expected a flat vector of {expected} parameters, "
                f"got shape {np.shape(ad._value(vector))}"
            )
        if not isinstance(vector, ad.Variable):
            vector = np.asarray(vector, dtype=np.float64)

        arrays = []
        offset = 0
        for shape in spec.shapes:
            size = int(np.prod(shape))
            arrays.append(vector[offset : offset + size].reshape(*shape))
            offset += size
        return cls(spec=spec, weights=tuple(arrays[0::2]), biases=tuple(arrays[1::2]), seed=seed)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NetworkParams):
            return NotImplemented
        if self.spec != other.spec or self.seed != other.seed:
            return False
        mine, theirs = self.arrays(), other.arrays()
        return all(
            np.shape(a) == np.shape(b)
            and np.array_equal(np.asarray(a).view(np.uint64), np.asarray(b).view(np.uint64))
            for a, b in zip(mine, theirs)
        )


@dataclass(frozen=True)
class GainMatrix:
    """The ``n_x x m`` observer gain L(t) at one time point."""

    entries: np.ndarray

    @classmethod
    def from_head(cls, head, n_x: int, m: int) -> GainMatrix:
        head = np.asarray(head, dtype=np.float64)
        if head.size != n_x * m:
            raise ShapeError(f"gain head of size {head.size} cannot form a {n_x}x{m} matrix")
        return cls(head.reshape(n_x, m))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def flatten(self) -> np.ndarray:
        return self.entries.reshape(-1)


def init_params(spec: LayerSpec, seed: int) -> NetworkParams:
    """
    Glorot-uniform weights and zero biases.

    Each ``W^j`` is drawn from ``U(-a, a)`` with ``a = sqrt(6 / (l_{j-1} + l_j))``
    by ``numpy.random.default_rng(seed)``, layer after layer.

    Raises
    ------
    ValueError
        If a layer has zero width.
    """
    if any(width < 1 for width in spec.widths):
        raise ValueError(f"zero-width layer in {spec.widths}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(spec=spec, weights=tuple(weights), biases=tuple(biases), seed=seed)


def _propagate(params: NetworkParams, h):
    activation = params.spec.activation.get_function()
    last = len(params.weights) - 1
    for j, (weight, bias) in enumerate(zip(params.weights, params.biases)):
        h = h @ weight.T + bias
        if j < last:
            h = activation(h)
    return h


def _time_column(t) -> np.ndarray:
    times = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    if not np.all(np.isfinite(times)):
        raise ValueError("network time input must be finite")
    return times


def _check_width(params: NetworkParams, n_x: int, m: int):
    if params.spec.output_width != n_x + n_x * m:
        raise ShapeError(
            f"output width {params.spec.output_width} does not split into "
            f"{n_x} states and a {n_x}x{m} gain"
        )


def evaluate(params: NetworkParams, times) -> Any:
    """
    Raw network output at a batch of times.

    Returns
    -------
    numpy.ndarray or Variable
        Shape ``(N, n_x + n_x * m)``, one row per time.
    """
    return _propagate(params, _time_column(times))


def evaluate_with_time_derivative(params: NetworkParams, times) -> ad.DualScalar:
    """Raw network output and its derivative with respect to time, batched."""
    column = _time_column(times)
    return _propagate(params, ad.DualScalar.seed(column))


def state_columns(output, n_x: int) -> list:
    """The state head of a batched output as one ``(N,)`` column per component."""
    return [output[:, i] for i in range(n_x)]


def gain_columns(output, n_x: int, m: int) -> list[list]:
    """Gain entries ``L[i][j]`` of a batched output, each an ``(N,)`` column."""
    return [[output[:, n_x + i * m + j] for j in range(m)] for i in range(n_x)]


def forward(params: NetworkParams, t: float, n_x: int, m: int) -> tuple[np.ndarray, GainMatrix]:
    """
    State estimate and observer gain at time ``t``.

    Raises
    ------
    ShapeError
        If the output width is not ``n_x + n_x * m``.
    """
    _check_width(params, n_x, m)
    row = np.asarray(evaluate(params, t))[0]
    return row[:n_x], GainMatrix.from_head(row[n_x:], n_x, m)


def forward_with_time_derivative(
    params: NetworkParams, t: float, n_x: int, m: int
) -> tuple[np.ndarray, np.ndarray, GainMatrix]:
    """
    As `forward`, plus the exact time derivative of the state estimate.

    The value parts are bit-identical to `forward` at the same ``t``.
    """
    _check_width(params, n_x, m)
    output = evaluate_with_time_derivative(params, t)
    row = np.asarray(output.value)[0]
    rate = np.asarray(output.deriv)[0]
    return row[:n_x], rate[:n_x], GainMatrix.from_head(row[n_x:], n_x, m)


def save_checkpoint(params: NetworkParams, path: Union[str, Path]) -> Path:
    """
    Write parameters as a versioned JSON document.

    Every array is stored row-major with hex-encoded floats, so
    ``load_checkpoint(save_checkpoint(p)) == p`` bit for bit.
    """
    store = TranscoderStore()
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "activation": params.spec.activation.value,
        "seed": params.seed,
        "shapes": [list(shape) for shape in params.spec.shapes],
        "widths": list(params.spec.widths),
        "values": [np.asarray(array, dtype=np.float64) for array in params.arrays()],
    }
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as stream:
        stream.write(json.dumps(document, default=store.default, indent=1))
        stream.write("\n")
    logger.debug("saved %d parameters to %s", params.parameter_count, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> NetworkParams:
    """
    Read parameters written by `save_checkpoint`.

    Raises
    ------
    ConfigError
        If the file is not a checkpoint of a supported version, or its
        arrays do not match the recorded architecture.
    """
    store = TranscoderStore()
    with open(path, encoding="utf-8") as stream:
        try:
            document = json.load(stream, object_hook=store.object_hook)
        except json.JSONDecodeError as error:
            raise ConfigError(f"{path} is not a checkpoint: {error}", field="ckpt") from error

    if document.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unknown checkpoint format {document.get('format')!r}", field="ckpt")
    if document.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint version {document.get('version')!r}", field="ckpt"
        )

    spec = LayerSpec(widths=tuple(document["widths"]), activation=document["activation"])
    values = document["values"]
    if [list(np.shape(value)) for value in values] != [list(s) for s in spec.shapes]:
        raise ConfigError("checkpoint arrays do not match the recorded layer widths", field="ckpt")
    return NetworkParams(
        spec=spec,
        weights=tuple(values[0::2]),
        biases=tuple(values[1::2]),
        seed=document.get("seed"),
    )
