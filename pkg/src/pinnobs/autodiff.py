"""
Differentiation engine.

Two cooperating modes are provided:

- ``DualScalar`` carries a value and its derivative with respect to the scalar
  time input (forward mode). Values and derivatives may be floats, numpy arrays
  (one entry per time point) or tape variables.
- ``GradientTape`` records ``Variable`` operations and replays adjoints in
  reverse order (reverse mode).

When the components of a ``DualScalar`` are tape variables, the time
derivative is itself recorded, so the loss gradient flows through it
(forward-over-reverse).
"""

from __future__ import annotations

import logging
from functools import singledispatch
from typing import Any
from typing import Callable
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np

from pinnobs.exceptions import NumericalError
from pinnobs.exceptions import PinnObsError
from pinnobs.exceptions import ShapeError
from pinnobs.exceptions import TapeConsumedError

logger = logging.getLogger(__name__)

DIVISION_FLOOR = 1e-12


class GradientTape:
    """
    Records array operations for a single reverse-mode pass.

    Nodes are stored in creation order, which is a topological order of the
    computation graph. Each node keeps the indices of its variable operands and
    one vector-Jacobian closure per operand.

    Attributes
    ----------
    consumed : bool
        True once ``backward`` has run. A consumed tape accepts neither new
        operations nor a second backward pass.
    """

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[tuple[Callable[[np.ndarray], np.ndarray], ...]] = []
        self._ops: list[str] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self._ops)

    def variable(self, value: Any, name: Optional[str] = None) -> Variable:
        """
        Register a leaf variable (a quantity we differentiate with respect to).

        Parameters
        ----------
        value : array_like
            Initial value, stored as a float64 array.
        name : str, optional
            Label used in diagnostics.

        Returns
        -------
        Variable
            The recorded leaf.
        """
        return self.record(np.array(value, dtype=np.float64), (), "leaf", name=name)

    def record(
        self,
        value: np.ndarray,
        links: Sequence[tuple[Variable, Callable[[np.ndarray], np.ndarray]]],
        op: str,
        name: Optional[str] = None,
    ) -> Variable:
        if self.consumed:
            raise TapeConsumedError(f"cannot record '{op}' on a consumed tape")
        index = len(self._ops)
        self._parents.append(tuple(operand.index for operand, _ in links))
        self._vjps.append(tuple(vjp for _, vjp in links))
        self._ops.append(op)
        return Variable(value, self, index, name)

    def backward(self, output: Variable, wrt: Sequence[Variable]) -> list[np.ndarray]:
        """
        Replay adjoints from a scalar output down to the requested variables.

        Parameters
        ----------
        output : Variable
            Scalar result recorded on this tape.
        wrt : sequence of Variable
            Variables whose adjoints are returned.

        Returns
        -------
        list of numpy.ndarray
            One gradient per entry of ``wrt``, shaped like its value.

        Raises
        ------
        TapeConsumedError
            If this tape already ran a backward pass.
        NumericalError
            If the adjoint of a requested variable is not finite.
        """
        if self.consumed:
            raise TapeConsumedError("backward called twice on the same tape")
        if output.tape is not self:
            raise PinnObsError("output was recorded on another tape")
        if np.size(output.value) != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
        self.consumed = True

        adjoints: list[Optional[np.ndarray]] = [None] * len(self._ops)
        adjoints[output.index] = np.ones_like(output.value)
        for index in range(output.index, -1, -1):
            adjoint = adjoints[index]
            if adjoint is None:
                continue
            for parent, vjp in zip(self._parents[index], self._vjps[index]):
                contribution = vjp(adjoint)
                if adjoints[parent] is None:
                    adjoints[parent] = contribution
                else:
                    adjoints[parent] = adjoints[parent] + contribution

        gradients = []
        for variable in wrt:
            if variable.tape is not self:
                raise PinnObsError("gradient requested for a variable of another tape")
            gradient = adjoints[variable.index]
            if gradient is None:
                gradient = np.zeros_like(variable.value)
            if not np.all(np.isfinite(gradient)):
                label = variable.name or f"variable #{variable.index}"
                raise NumericalError(f"non-finite adjoint for {label}")
            gradients.append(np.asarray(gradient, dtype=np.float64).reshape(variable.shape))

        self._parents.clear()
        self._vjps.clear()
        return gradients


class Variable:
    """
    Array-valued node recorded on a ``GradientTape``.

    Supports numpy broadcasting for ``+ - * /`` (gradients are summed back to
    the operand shapes), ``@`` on 2-d operands, constant powers, basic
    indexing, ``reshape``, ``.T``, ``sum`` and ``mean``.
    """

    __slots__ = ("value", "tape", "index", "name")
    # makes numpy defer binary operators to the reflected methods below
    __array_ufunc__ = None

    def __init__(self, value: np.ndarray, tape: GradientTape, index: int, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.value)

    @property
    def ndim(self) -> int:
        return np.ndim(self.value)

    def __repr__(self):
        return f"Variable(shape={self.shape}, index={self.index})"

    # dual operands take precedence: they dispatch back to the tape component-wise
    def __add__(self, other):
        return NotImplemented if isinstance(other, DualScalar) else _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return NotImplemented if isinstance(other, DualScalar) else _sub(self, other)

    def __rsub__(self, other):
        return _sub(other, self)

    def __mul__(self, other):
        return NotImplemented if isinstance(other, DualScalar) else _mul(self, other)

    def __rmul__(self, other):
        return _mul(other, self)

    def __truediv__(self, other):
        return NotImplemented if isinstance(other, DualScalar) else _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __matmul__(self, other):
        return NotImplemented if isinstance(other, DualScalar) else _matmul(self, other)

    def __rmatmul__(self, other):
        return _matmul(other, self)

    def __neg__(self):
        return self.tape.record(-self.value, ((self, lambda g: -g),), "neg")

    def __pow__(self, power):
        if isinstance(power, (Variable, DualScalar)):
            raise TypeError("only constant exponents are supported")
        x = self.value
        return self.tape.record(
            x**power, ((self, lambda g: g * power * x ** (power - 1)),), "pow"
        )

    def __getitem__(self, index):
        x = self.value

        def vjp(g):
            out = np.zeros_like(x)
            if _is_basic_index(index):
                out[index] = g
            else:
                np.add.at(out, index, g)
            return out

        return self.tape.record(np.asarray(x[index]), ((self, vjp),), "getitem")

    def reshape(self, *shape):
        x = self.value
        return self.tape.record(
            x.reshape(*shape), ((self, lambda g: np.reshape(g, x.shape)),), "reshape"
        )

    @property
    def T(self):
        return self.tape.record(self.value.T, ((self, lambda g: g.T),), "transpose")

    def sum(self, axis: Optional[int] = None):
        x = self.value

        def vjp(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, x.shape)

        return self.tape.record(np.asarray(x.sum(axis=axis)), ((self, vjp),), "sum")

    def mean(self, axis: Optional[int] = None):
        count = np.size(self.value) if axis is None else np.shape(self.value)[axis]
        return self.sum(axis=axis) / float(count)


class DualScalar:
    """
    Value paired with its derivative with respect to the time input.

    Attributes
    ----------
    value : float, numpy.ndarray or Variable
        Primal value.
    deriv : float, numpy.ndarray or Variable
        Derivative d(value)/dt. Constants carry 0, the time seed carries 1.
    """

    __slots__ = ("value", "deriv")
    __array_ufunc__ = None

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    @classmethod
    def seed(cls, t) -> DualScalar:
        t = np.asarray(t, dtype=np.float64)
        return cls(t, np.ones_like(t))

    def __repr__(self):
        return f"DualScalar(value={self.value!r}, deriv={self.deriv!r})"

    def __add__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value + other.value, self.deriv + other.deriv)
        return DualScalar(self.value + other, self.deriv)

    def __radd__(self, other):
        return DualScalar(other + self.value, self.deriv)

    def __sub__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value - other.value, self.deriv - other.deriv)
        return DualScalar(self.value - other, self.deriv)

    def __rsub__(self, other):
        return DualScalar(other - self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(
                self.value * other.value,
                self.value * other.deriv + self.deriv * other.value,
            )
        return DualScalar(self.value * other, self.deriv * other)

    def __rmul__(self, other):
        return DualScalar(other * self.value, other * self.deriv)

    def __truediv__(self, other):
        if isinstance(other, DualScalar):
            quotient = self.value / other.value
            return DualScalar(quotient, (self.deriv - quotient * other.deriv) / other.value)
        return DualScalar(self.value / other, self.deriv / other)

    def __rtruediv__(self, other):
        quotient = other / self.value
        return DualScalar(quotient, -quotient * self.deriv / self.value)

    def __neg__(self):
        return DualScalar(-self.value, -self.deriv)

    def __pow__(self, power):
        if isinstance(power, (Variable, DualScalar)):
            raise TypeError("only constant exponents are supported")
        return DualScalar(self.value**power, power * self.value ** (power - 1) * self.deriv)

    def __matmul__(self, other):
        if isinstance(other, DualScalar):
            raise TypeError("matrix products between two dual operands are not supported")
        return DualScalar(self.value @ other, self.deriv @ other)

    def __getitem__(self, index):
        return DualScalar(self.value[index], self.deriv[index])


Operand = Union[float, np.ndarray, Variable]


def _value(x: Operand) -> Any:
    return x.value if isinstance(x, Variable) else x


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(item, (int, np.integer, slice)) or item is Ellipsis for item in items)


def _unbroadcast(gradient: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    gradient = np.asarray(gradient)
    while gradient.ndim > len(shape):
        gradient = gradient.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and gradient.shape[axis] != 1:
            gradient = gradient.sum(axis=axis, keepdims=True)
    return gradient


def _record(value, operands: Sequence[tuple[Operand, Callable]], op: str):
    links = [(operand, vjp) for operand, vjp in operands if isinstance(operand, Variable)]
    tape = links[0][0].tape
    for operand, _ in links[1:]:
        if operand.tape is not tape:
            raise PinnObsError(f"'{op}' mixes variables of different tapes")
    return tape.record(np.asarray(value, dtype=np.float64), links, op)


def _add(a: Operand, b: Operand) -> Variable:
    x, y = _value(a), _value(b)
    return _record(
        x + y,
        (
            (a, lambda g: _unbroadcast(g, np.shape(x))),
            (b, lambda g: _unbroadcast(g, np.shape(y))),
        ),
        "add",
    )


def _sub(a: Operand, b: Operand) -> Variable:
    x, y = _value(a), _value(b)
    return _record(
        x - y,
        (
            (a, lambda g: _unbroadcast(g, np.shape(x))),
            (b, lambda g: -_unbroadcast(g, np.shape(y))),
        ),
        "sub",
    )


def _mul(a: Operand, b: Operand) -> Variable:
    x, y = _value(a), _value(b)
    return _record(
        x * y,
        (
            (a, lambda g: _unbroadcast(g * y, np.shape(x))),
            (b, lambda g: _unbroadcast(g * x, np.shape(y))),
        ),
        "mul",
    )


def _div(a: Operand, b: Operand) -> Variable:
    x, y = _value(a), _value(b)
    if isinstance(b, Variable) and np.any(np.abs(y) < DIVISION_FLOOR):
        raise NumericalError(f"division by a recorded value below {DIVISION_FLOOR:g}")
    return _record(
        x / y,
        (
            (a, lambda g: _unbroadcast(g / y, np.shape(x))),
            (b, lambda g: _unbroadcast(-g * x / (y * y), np.shape(y))),
        ),
        "div",
    )


def _matmul(a: Operand, b: Operand) -> Variable:
    x, y = np.asarray(_value(a)), np.asarray(_value(b))
    if x.ndim != 2 or y.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {x.shape} @ {y.shape}")
    return _record(
        x @ y,
        ((a, lambda g: g @ y.T), (b, lambda g: x.T @ g)),
        "matmul",
    )


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _dual_chain(x: DualScalar, slope, curvature, op: str) -> Any:
    """
    Derivative ``slope(v) * dv`` of an element-wise function of ``x``.

    Recorded as a single node when ``x`` lives on a tape; ``curvature`` is the
    derivative of ``slope`` with respect to ``v``.
    """
    v, dv = x.value, x.deriv
    if not isinstance(v, Variable) and not isinstance(dv, Variable):
        return slope * dv
    d = _value(dv)
    return _record(
        slope * d,
        (
            (v, lambda g: _unbroadcast(g * curvature * d, np.shape(_value(v)))),
            (dv, lambda g: _unbroadcast(g * slope, np.shape(d))),
        ),
        op,
    )


@singledispatch
def tanh(x):
    return np.tanh(x)


@tanh.register(Variable)
def _(x: Variable):
    y = np.tanh(x.value)
    return _record(y, ((x, lambda g: g * (1.0 - y * y)),), "tanh")


@tanh.register(DualScalar)
def _(x: DualScalar):
    y = tanh(x.value)
    value = np.asarray(_value(y))
    slope = 1.0 - value * value
    return DualScalar(y, _dual_chain(x, slope, -2.0 * value * slope, "tanh_rate"))


@singledispatch
def sin(x):
    return np.sin(x)


@sin.register(Variable)
def _(x: Variable):
    v = x.value
    return _record(np.sin(v), ((x, lambda g: g * np.cos(v)),), "sin")


@sin.register(DualScalar)
def _(x: DualScalar):
    v = np.asarray(_value(x.value))
    return DualScalar(sin(x.value), _dual_chain(x, np.cos(v), -np.sin(v), "sin_rate"))


@singledispatch
def cos(x):
    return np.cos(x)


@cos.register(Variable)
def _(x: Variable):
    v = x.value
    return _record(np.cos(v), ((x, lambda g: -g * np.sin(v)),), "cos")


@cos.register(DualScalar)
def _(x: DualScalar):
    return DualScalar(cos(x.value), -sin(x.value) * x.deriv)


@singledispatch
def exp(x):
    return np.exp(x)


@exp.register(Variable)
def _(x: Variable):
    y = np.exp(x.value)
    return _record(y, ((x, lambda g: g * y),), "exp")


@exp.register(DualScalar)
def _(x: DualScalar):
    y = exp(x.value)
    return DualScalar(y, y * x.deriv)


@singledispatch
def sqrt(x):
    return np.sqrt(x)


@sqrt.register(Variable)
def _(x: Variable):
    y = np.sqrt(x.value)
    return _record(y, ((x, lambda g: 0.5 * g / y),), "sqrt")


@sqrt.register(DualScalar)
def _(x: DualScalar):
    y = sqrt(x.value)
    return DualScalar(y, x.deriv / (2.0 * y))


@singledispatch
def sigmoid(x):
    return _sigmoid(x)


@sigmoid.register(Variable)
def _(x: Variable):
    y = _sigmoid(x.value)
    return _record(y, ((x, lambda g: g * y * (1.0 - y)),), "sigmoid")


@sigmoid.register(DualScalar)
def _(x: DualScalar):
    y = sigmoid(x.value)
    value = np.asarray(_value(y))
    slope = value * (1.0 - value)
    return DualScalar(y, _dual_chain(x, slope, slope * (1.0 - 2.0 * value), "sigmoid_rate"))


@singledispatch
def relu(x):
    return np.maximum(x, 0.0)


@relu.register(Variable)
def _(x: Variable):
    mask = (x.value > 0.0).astype(np.float64)
    return _record(x.value * mask, ((x, lambda g: g * mask),), "relu")


@relu.register(DualScalar)
def _(x: DualScalar):
    # the step function is piecewise constant: no second-order contribution
    mask = (np.asarray(_value(x.value)) > 0.0).astype(np.float64)
    return DualScalar(relu(x.value), mask * x.deriv)


def grad(loss: Any, params: Union[Variable, Sequence[Variable]]) -> np.ndarray:
    """
    Gradient of a recorded scalar with respect to parameters.

    Parameters
    ----------
    loss : Variable or float
        Scalar produced by a computation recorded on a live tape. A plain
        number (a loss that does not depend on the parameters) has a zero
        gradient.
    params : Variable or sequence of Variable
        Parameters, flattened and concatenated in the given order.

    Returns
    -------
    numpy.ndarray
        Flat vector of ∂loss/∂p, one entry per scalar parameter.

    Raises
    ------
    TapeConsumedError
        If the tape already ran a backward pass.
    NumericalError
        If an adjoint is not finite.
    """
    params = [params] if isinstance(params, Variable) else list(params)
    if not isinstance(loss, Variable):
        size = sum(int(np.size(_value(p))) for p in params)
        return np.zeros(size)
    gradients = loss.tape.backward(loss, params)
    if not gradients:
        return np.zeros(0)
    return np.concatenate([np.ravel(g) for g in gradients])


def check_gradient(
    f: Callable[[Any], Any], point: Sequence[float], step: float = 1e-6
) -> float:
    """
    Compare the taped gradient of ``f`` with central finite differences.

    ``f`` must be written with the generic operations of this module so that
    it runs on a tape variable as well as on a plain array.

    Parameters
    ----------
    f : callable
        Maps a 1-d parameter vector to a scalar.
    point : array_like
        Parameter vector where the gradient is checked.
    step : float
        Central-difference step, strictly positive.

    Returns
    -------
    float
        ``max_i |analytic_i - numeric_i| / max(1, |analytic_i|)``.

    Raises
    ------
    ValueError
        If ``step`` is not positive.
    NumericalError
        If ``f`` is not finite at a perturbed point.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    point = np.array(point, dtype=np.float64).reshape(-1)

    tape = GradientTape()
    variable = tape.variable(point, name="point")
    analytic = grad(f(variable), [variable])

    numeric = np.empty_like(analytic)
    for i in range(point.size):
        shift = np.zeros_like(point)
        shift[i] = step
        upper = float(np.asarray(_value(f(point + shift))))
        lower = float(np.asarray(_value(f(point - shift))))
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NumericalError(f"non-finite function value around coordinate {i}")
        numeric[i] = (upper - lower) / (2.0 * step)

    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
