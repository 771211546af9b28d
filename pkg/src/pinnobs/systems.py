"""
Benchmark dynamical systems ``x' = f(x, t) + B u(t)``, ``y = C x``.

Each system is built by a factory registered with the `benchmark`
decorator. The right-hand side ``f`` receives the state as a sequence of
components and returns the derivative components. Components may be floats,
arrays over time points or tape variables, so the same closure serves the
integrator and the training loss.
"""

from __future__ import annotations

import inspect
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Any
from typing import Callable
from typing import Sequence

import numpy as np

from pinnobs import autodiff as ad
from pinnobs.exceptions import ConfigError
from pinnobs.exceptions import ShapeError
from pinnobs.exceptions import TrajectoryEscapeError
from pinnobs.exceptions import UnknownSystemError

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 20.0
DEFAULT_DT = 2e-3
MOTOR_SUBSTEPS = 64

_FACTORIES: dict[str, Callable[..., SystemModel]] = {}

COMMON_OVERRIDES = ("x0", "xhat0", "horizon", "dt", "substeps")


def benchmark(name: str):
    """
    Decorator registering a system factory under ``name``.

    Raises
    ------
    ValueError
        If the name is already taken.
    """

    def decorator(factory: Callable[..., SystemModel]) -> Callable[..., SystemModel]:
        if name in _FACTORIES:
            raise ValueError(f"system {name!r} registered twice")
        _FACTORIES[name] = factory
        return factory

    return decorator


@dataclass(frozen=True, eq=False)
class SystemModel:
    """
    A benchmark plant and the observer's starting point.

    Attributes
    ----------
    name : str
        Registry name.
    n_x, m : int
        State and output dimensions.
    f : callable
        ``f(x, t)`` returning the derivative components.
    B : numpy.ndarray
        ``(n_x, n_u)`` input matrix.
    u : callable
        ``u(t)`` returning ``(n_u,)`` for a scalar ``t`` and ``(n_u, N)`` for
        an array of ``N`` times.
    C : numpy.ndarray
        ``(m, n_x)`` output matrix with full row rank.
    x0 : numpy.ndarray
        True initial state.
    xhat0 : numpy.ndarray
        Observer initial estimate.
    params : dict
        Named constants, derived ones included.
    horizon, dt : float
        Default simulation horizon and sampling step.
    substeps : int
        RK4 steps taken inside each sampling step.
    """

    name: str
    n_x: int
    m: int
    f: Callable[[Sequence[Any], Any], Sequence[Any]]
    B: np.ndarray
    u: Callable[[Any], np.ndarray]
    C: np.ndarray
    x0: np.ndarray
    xhat0: np.ndarray
    params: dict[str, float] = field(default_factory=dict)
    horizon: float = DEFAULT_HORIZON
    dt: float = DEFAULT_DT
    substeps: int = 1

    def __post_init__(self):
        for attribute in ("B", "C", "x0", "xhat0"):
            array = np.array(getattr(self, attribute), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, attribute, array)

        if self.x0.shape != (self.n_x,) or self.xhat0.shape != (self.n_x,):
            raise ShapeError(f"{self.name}: initial states must have length {self.n_x}")
        if self.C.shape != (self.m, self.n_x):
            raise ShapeError(f"{self.name}: C must be {self.m}x{self.n_x}, got {self.C.shape}")
        if self.B.ndim != 2 or self.B.shape[0] != self.n_x:
            raise ShapeError(f"{self.name}: B must have {self.n_x} rows, got {self.B.shape}")
        if self.m > self.n_x or np.linalg.matrix_rank(self.C) != self.m:
            raise ConfigError(f"{self.name}: C must have full row rank", field="C")
        if self.horizon < 0:
            raise ConfigError(f"{self.name}: horizon must be non-negative", field="horizon")
        if self.dt <= 0:
            raise ConfigError(f"{self.name}: dt must be positive", field="dt")
        if self.substeps < 1:
            raise ConfigError(f"{self.name}: substeps must be positive", field="substeps")
        if not np.all(np.isfinite(dynamics(self, self.x0, 0.0))):
            raise ConfigError(f"{self.name}: f(x0, 0) is not finite", field="x0")

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def measured_states(self) -> list[int]:
        """State indices read by some row of ``C``."""
        return [i for i in range(self.n_x) if np.any(self.C[:, i] != 0.0)]

    def forcing(self, t) -> np.ndarray:
        """``B u(t)``: shape ``(n_x,)`` for a scalar time, ``(n_x, N)`` for ``N`` times."""
        return self.B @ np.asarray(self.u(t), dtype=np.float64)


def _no_input(t) -> np.ndarray:
    if np.ndim(t) == 0:
        return np.zeros(1)
    return np.zeros((1, np.size(t)))


def dynamics(sys: SystemModel, x, t: float) -> np.ndarray:
    """
    ``f(x, t)`` as a float array, without the input term.

    Raises
    ------
    ShapeError
        If ``x`` does not have ``n_x`` components.
    TrajectoryEscapeError
        If the derivative is not finite.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (sys.n_x,):
        raise ShapeError(f"{sys.name} expects a state of length {sys.n_x}, got shape {x.shape}")
    rate = np.array([float(component) for component in sys.f(tuple(x), t)], dtype=np.float64)
    if not np.all(np.isfinite(rate)):
        raise TrajectoryEscapeError(f"{sys.name}: non-finite derivative at t={t}", time=t)
    return rate


def output(sys: SystemModel, x) -> np.ndarray:
    return sys.C @ np.asarray(x, dtype=np.float64)


@benchmark("reverse_duffing")
def reverse_duffing() -> SystemModel:
    def f(x, t):
        x1, x2 = x
        return (x2**3, -x1)

    return SystemModel(
        name="reverse_duffing",
        n_x=2,
        m=1,
        f=f,
        B=np.zeros((2, 1)),
        u=_no_input,
        C=np.array([[1.0, 0.0]]),
        x0=np.array([2.0, -1.0]),
        xhat0=np.array([1.0, 1.0]),
    )


@benchmark("induction_motor")
def induction_motor(
    excitation: str = "sinusoidal",
    excitation_scale: float = 1.0,
    amplitude: float = 220.0,
    frequency: float = 50.0,
) -> SystemModel:
    """
    Fifth-order two-phase induction motor.

    States are the two stator currents, the two rotor fluxes and the rotor
    speed; the currents are measured. The stator voltages are a two-phase
    sinusoid ``amplitude * (sin(w t), cos(w t))`` with ``w = 2 pi frequency
    excitation_scale``, or zero with ``excitation="none"``.

    A drive period spans ten sampling steps at the default ``dt``, so the
    plant takes ``MOTOR_SUBSTEPS`` RK4 steps per sample; halving ``dt`` then
    moves the sampled trajectory by well under ``1e-6``.
    """
    if excitation not in ("sinusoidal", "none"):
        raise ConfigError(
            f"excitation must be 'sinusoidal' or 'none', got {excitation!r}", field="excitation"
        )
    Rs, Rr, M, Ls, Lr, J, TL, p = 0.18, 0.15, 0.068, 0.0699, 0.0699, 0.0586, 10.0, 1.0
    Tr = Lr / Rr
    sigma = 1.0 - M**2 / (Ls * Lr)
    K = M / (sigma * Ls * Lr)
    gamma = Rs / (sigma * Ls) + Rr * M**2 / (sigma * Ls * Lr**2)

    def f(x, t):
        x1, x2, x3, x4, x5 = x
        return (
            -gamma * x1 + (K / Tr) * x3 + K * p * x5 * x4,
            -gamma * x2 - K * p * x5 * x3 + (K / Tr) * x4,
            (M / Tr) * x1 - (1.0 / Tr) * x3 - p * x5 * x4,
            (M / Tr) * x2 + p * x5 * x3 - (1.0 / Tr) * x4,
            (p * M / (J * Lr)) * (x3 * x2 - x4 * x1) - TL / J,
        )

    omega = 2.0 * np.pi * frequency * excitation_scale
    if excitation == "none":
        amplitude = 0.0

    def u(t):
        if np.ndim(t) == 0:
            phase = omega * float(t)
            return np.array([amplitude * math.sin(phase), amplitude * math.cos(phase)])
        t = np.asarray(t, dtype=np.float64)
        return np.stack([amplitude * np.sin(omega * t), amplitude * np.cos(omega * t)])

    B = np.zeros((5, 2))
    B[0, 0] = B[1, 1] = 1.0 / (sigma * Ls)
    return SystemModel(
        name="induction_motor",
        n_x=5,
        m=2,
        f=f,
        B=B,
        u=u,
        C=np.array([[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]]),
        x0=np.array([1.0, 0.0, 2.0, 3.0, 0.0]),
        xhat0=np.array([2.0, 1.0, 0.0, 2.0, 0.0]),
        substeps=MOTOR_SUBSTEPS,
        params={
            "Rs": Rs,
            "Rr": Rr,
            "M": M,
            "Ls": Ls,
            "Lr": Lr,
            "J": J,
            "TL": TL,
            "p": p,
            "Tr": Tr,
            "sigma": sigma,
            "K": K,
            "gamma": gamma,
            "amplitude": amplitude,
            "frequency": frequency,
            "excitation_scale": excitation_scale,
        },
    )


@benchmark("harmonic_oscillator")
def harmonic_oscillator() -> SystemModel:
    # x3 is the unknown squared frequency
    def f(x, t):
        x1, x2, x3 = x
        return (x2, -x3 * x1, 0.0)

    return SystemModel(
        name="harmonic_oscillator",
        n_x=3,
        m=1,
        f=f,
        B=np.zeros((3, 1)),
        u=_no_input,
        C=np.array([[1.0, 0.0, 0.0]]),
        x0=np.array([0.0, 1.0, 3.0]),
        xhat0=np.array([0.0, 1.0, -1.0]),
    )


@benchmark("academic_ex3")
def academic_ex3() -> SystemModel:
    def f(x, t):
        x1, x2 = x
        root = ad.sqrt(1.0 + x1 * x1)
        return (x2 * root, -(x1 / root) * x2 * x2)

    return SystemModel(
        name="academic_ex3",
        n_x=2,
        m=1,
        f=f,
        B=np.zeros((2, 1)),
        u=_no_input,
        C=np.array([[1.0, 0.0]]),
        x0=np.array([1.0, 0.5]),
        xhat0=np.array([0.0, 0.0]),
    )


@benchmark("academic_ex4")
def academic_ex4() -> SystemModel:
    def f(x, t):
        x1, x2 = x
        root = ad.sqrt(1.0 + x2 * x2)
        return (x2 * root, -(x1 / root) * x2 * x2)

    return SystemModel(
        name="academic_ex4",
        n_x=2,
        m=1,
        f=f,
        B=np.zeros((2, 1)),
        u=_no_input,
        C=np.array([[1.0, 0.0]]),
        x0=np.array([1.0, 0.5]),
        xhat0=np.array([0.0, 0.0]),
    )


@benchmark("rigid_body")
def rigid_body(inertia: Sequence[float] = (3.0, 2.0, 1.0)) -> SystemModel:
    """Torque-free rigid body (Euler equations), angular velocity ``x1`` measured."""
    if len(inertia) != 3 or any(value <= 0 for value in inertia):
        raise ConfigError(f"inertia needs three positive moments, got {inertia}", field="inertia")
    I1, I2, I3 = (float(value) for value in inertia)
    a1 = (I2 - I3) / I1
    a2 = (I3 - I1) / I2
    a3 = (I1 - I2) / I3

    def f(x, t):
        x1, x2, x3 = x
        return (a1 * x2 * x3, a2 * x1 * x3, a3 * x1 * x2)

    return SystemModel(
        name="rigid_body",
        n_x=3,
        m=1,
        f=f,
        B=np.zeros((3, 1)),
        u=_no_input,
        C=np.array([[1.0, 0.0, 0.0]]),
        x0=np.array([1.0, 0.5, -0.5]),
        xhat0=np.array([1.0, 0.0, 0.0]),
        params={"I1": I1, "I2": I2, "I3": I3, "a1": a1, "a2": a2, "a3": a3},
    )


def system_names() -> list[str]:
    return list(_FACTORIES)


def registry() -> list[SystemModel]:
    """The six benchmark systems with their default constants."""
    return [factory() for factory in _FACTORIES.values()]


def build_system(name: str, **overrides: Any) -> SystemModel:
    """
    Build one registered system with some constants overridden.

    Parameters
    ----------
    name : str
        Registry name.
    **overrides
        ``x0``, ``xhat0``, ``horizon`` and ``dt`` apply to every system; any
        other key must be a parameter of the system's factory (for instance
        ``excitation`` for the induction motor, ``inertia`` for the rigid body).
        ``None`` values are ignored.

    Raises
    ------
    UnknownSystemError
        If ``name`` is not registered.
    ConfigError
        If an override does not apply to the system.
    """
    if name not in _FACTORIES:
        raise UnknownSystemError(
            f"unknown system {name!r}, expected one of {system_names()}", field="system"
        )
    factory = _FACTORIES[name]
    overrides = {key: value for key, value in overrides.items() if value is not None}
    common = {key: overrides.pop(key) for key in COMMON_OVERRIDES if key in overrides}

    accepted = inspect.signature(factory).parameters
    for key in overrides:
        if key not in accepted:
            raise ConfigError(f"system {name!r} has no parameter {key!r}", field=key)

    sys = factory(**overrides)
    if common:
        sys = replace(sys, **common)
    logger.debug("built system %s with overrides %s", name, sorted({**overrides, **common}))
    return sys


def duffing_energy(x) -> Any:
    """``x1^2 + x2^4 / 2``, conserved by the reverse Duffing flow. Works on ``(..., 2)`` arrays."""
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0] ** 2 + x[..., 1] ** 4 / 2.0


def rigid_body_invariants(sys: SystemModel, x) -> tuple[Any, Any]:
    """
    Kinetic energy and squared angular momentum (up to factors) of the rigid body.

    Returns ``(sum I_i x_i^2, sum I_i^2 x_i^2)`` over the last axis of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    inertia = np.array([sys.params["I1"], sys.params["I2"], sys.params["I3"]])
    squares = x**2
    return squares @ inertia, squares @ inertia**2

