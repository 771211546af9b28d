"""
Experiment and ablation configuration.

Configurations are INI files read with `configparser` and validated by
pydantic models. List values are comma separated. See ``docs/config.md``.
"""

from __future__ import annotations

import configparser
import io
import logging
from pathlib import Path
from typing import Any
from typing import Literal
from typing import Optional
from typing import Union

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import field_validator
from pydantic import model_validator

from pinnobs.exceptions import ConfigError
from pinnobs.exceptions import ShapeError
from pinnobs.integrator import grid
from pinnobs.network import Activation
from pinnobs.network import LayerSpec
from pinnobs.systems import SystemModel
from pinnobs.systems import build_system
from pinnobs.systems import system_names
from pinnobs.trainer import Collocation
from pinnobs.trainer import LossWeights
from pinnobs.trainer import TrainConfig

logger = logging.getLogger(__name__)

WEIGHT_CASES: dict[int, tuple[float, float, float]] = {
    1: (1.0, 1.0, 1.0),
    2: (0.5, 1.5, 1.0),
    3: (1.5, 0.5, 1.0),
    4: (1.0, 2.0, 1.0),
    5: (2.0, 1.0, 1.0),
    6: (2.0, 1.0, 0.5),
    7: (2.0, 1.5, 1.5),
}


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(item.strip() for item in value.split(",") if item.strip())
    return value


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(Section):
    system: str
    seed: int = 42
    split_seed: Optional[int] = None
    train_fraction: float = Field(default=0.6, gt=0, le=1)
    out: Optional[str] = None

    @field_validator("system")
    @classmethod
    def _check_system(cls, system: str) -> str:
        if system not in system_names():
            raise ValueError(f"unknown system {system!r}, expected one of {system_names()}")
        return system


class SimulationSection(Section):
    horizon: Optional[float] = Field(default=None, ge=0)
    dt: Optional[float] = Field(default=None, gt=0)
    substeps: Optional[int] = Field(default=None, ge=1)
    x0: Optional[tuple[float, ...]] = None
    xhat0: Optional[tuple[float, ...]] = None
    excitation: Optional[Literal["sinusoidal", "none"]] = None
    excitation_scale: Optional[float] = Field(default=None, gt=0)
    inertia: Optional[tuple[float, ...]] = None

    @field_validator("x0", "xhat0", "inertia", mode="before")
    @classmethod
    def _split(cls, value: Any) -> Any:
        return _split_list(value)


class NetworkSection(Section):
    depth: int = Field(default=9, ge=1)
    width: int = Field(default=20, ge=1)
    activation: Activation = Activation.tanh


class TrainingSection(Section):
    lr: float = Field(default=1e-3, gt=0)
    max_iters: int = Field(default=200_000, ge=1)
    patience: int = Field(default=20_000, ge=0)
    w0: float = Field(default=1.0, ge=0)
    w_ode: float = Field(default=1.0, ge=0)
    w_y: float = Field(default=1.0, ge=0)
    collocation: Collocation = Collocation.train
    collocation_points: int = Field(default=2000, ge=2)
    squared_initial_loss: bool = True
    log_every: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _clamp_patience(self) -> TrainingSection:
        if self.patience > self.max_iters:
            logger.debug("patience %d clamped to max_iters %d", self.patience, self.max_iters)
            self.patience = self.max_iters
        return self


class StorageSection(Section):
    database_url: Optional[str] = None


def _validation_error(error: ValidationError, source: Union[str, Path]) -> ConfigError:
    first = error.errors()[0]
    location = [str(part) for part in first["loc"]]
    field = location[-1] if location else None
    return ConfigError(f"{source}: invalid {'.'.join(location)}: {first['msg']}", field=field)


def _read_ini(path: Union[str, Path]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as stream:
            parser.read_file(stream)
    except configparser.Error as error:
        raise ConfigError(f"{path}: {error}") from error
    return parser


def _format_value(value: Any) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(item) for item in value)
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


class ExperimentConfig(BaseModel):
    """
    A fully validated experiment.

    Examples
    --------
    >>> config = ExperimentConfig.load("configs/reverse_duffing.cfg", {"seed": 7})
    >>> sys = config.build_system()
    >>> train_config = config.train_config(sys)
    """

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentSection
    simulation: SimulationSection = SimulationSection()
    network: NetworkSection = NetworkSection()
    training: TrainingSection = TrainingSection()
    storage: StorageSection = StorageSection()

    @classmethod
    def from_sections(
        cls,
        sections: dict[str, dict[str, Any]],
        overrides: Optional[dict[str, Any]] = None,
        source: Union[str, Path] = "<config>",
    ) -> ExperimentConfig:
        """
        Validate raw sections, applying CLI overrides first.

        Recognized overrides are ``seed``, ``out`` and ``max_iters``; ``None``
        values are ignored.

        Raises
        ------
        ConfigError
            Naming the offending field.
        """
        sections = {name: dict(values) for name, values in sections.items()}
        known = set(cls.model_fields)
        for name in sections:
            if name not in known:
                raise ConfigError(f"{source}: unknown section [{name}]", field=name)
        if "experiment" not in sections:
            raise ConfigError(f"{source}: missing section [experiment]", field="experiment")

        targets = {"seed": "experiment", "out": "experiment", "max_iters": "training"}
        for key, value in (overrides or {}).items():
            if value is not None and key in targets:
                sections.setdefault(targets[key], {})[key] = value
        try:
            return cls.model_validate(sections)
        except ValidationError as error:
            raise _validation_error(error, source) from error

    @classmethod
    def load(
        cls, path: Union[str, Path], overrides: Optional[dict[str, Any]] = None
    ) -> ExperimentConfig:
        parser = _read_ini(path)
        sections = {name: dict(parser.items(name)) for name in parser.sections()}
        config = cls.from_sections(sections, overrides, source=path)
        logger.debug("loaded experiment config %s", path)
        return config

    @property
    def output_dir(self) -> Path:
        return Path(self.experiment.out or Path("runs") / self.experiment.system)

    @property
    def split_seed(self) -> int:
        if self.experiment.split_seed is None:
            return self.experiment.seed
        return self.experiment.split_seed

    def build_system(self) -> SystemModel:
        """
        The configured system.

        Raises
        ------
        ConfigError
            If an override does not fit the system, or the horizon and step
            give a grid above the size limit.
        """
        simulation = self.simulation.model_dump(exclude_none=True)
        try:
            sys = build_system(self.experiment.system, **simulation)
        except (ValueError, ShapeError) as error:
            raise ConfigError(str(error), field="simulation") from error
        try:
            grid(sys.horizon, sys.dt)
        except ValueError as error:
            raise ConfigError(str(error), field="horizon") from error
        return sys

    def layer_spec(self, sys: SystemModel) -> LayerSpec:
        return LayerSpec.for_system(
            sys.n_x, sys.m, self.network.depth, self.network.width, self.network.activation
        )

    def train_config(self, sys: SystemModel) -> TrainConfig:
        training = self.training
        return TrainConfig(
            spec=self.layer_spec(sys),
            lr=training.lr,
            max_iters=training.max_iters,
            patience=training.patience,
            weights=LossWeights(w0=training.w0, w_ode=training.w_ode, w_y=training.w_y),
            seed=self.experiment.seed,
            collocation=training.collocation,
            collocation_points=training.collocation_points,
            squared_initial_loss=training.squared_initial_loss,
            log_every=training.log_every,
        )

    def resolved(self, sys: SystemModel) -> ExperimentConfig:
        """A copy with every default filled in from the built system."""
        simulation = self.simulation.model_copy(
            update={
                "horizon": sys.horizon,
                "dt": sys.dt,
                "substeps": sys.substeps,
                "x0": tuple(float(value) for value in sys.x0),
                "xhat0": tuple(float(value) for value in sys.xhat0),
            }
        )
        experiment = self.experiment.model_copy(
            update={"out": str(self.output_dir), "split_seed": self.split_seed}
        )
        return self.model_copy(update={"experiment": experiment, "simulation": simulation})

    def manifest(self) -> str:
        """The configuration as INI text, ``None`` values left out."""
        parser = configparser.ConfigParser(interpolation=None)
        for name in type(self).model_fields:
            section: BaseModel = getattr(self, name)
            parser[name] = {
                key: _format_value(value)
                for key, value in section.model_dump().items()
                if value is not None
            }
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def with_updates(self, **sections: dict[str, Any]) -> ExperimentConfig:
        """Copy with some section fields replaced, revalidated."""
        data = self.model_dump()
        for name, values in sections.items():
            data[name].update(values)
        try:
            return type(self).model_validate(data)
        except ValidationError as error:
            raise _validation_error(error, "<update>") from error


class AblationCell(BaseModel):
    cell_id: str
    updates: dict[str, dict[str, Any]]


class AblationConfig(BaseModel):
    """
    A grid of experiments varying one axis of a base configuration.

    ``architecture`` crosses ``depths`` with ``widths``, ``activation`` runs
    every entry of ``activations`` and ``weights`` runs the listed loss-weight
    cases (1 to 7).
    """

    model_config = ConfigDict(extra="forbid")

    base: Path
    axis: Literal["architecture", "activation", "weights"]
    depths: tuple[int, ...] = (4, 9, 12, 15)
    widths: tuple[int, ...] = (10, 15, 20, 30)
    activations: tuple[Activation, ...] = (
        Activation.relu,
        Activation.sigmoid,
        Activation.tanh,
        Activation.sine,
    )
    weight_cases: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    out: Optional[str] = None
    database_url: Optional[str] = None

    @field_validator("depths", "widths", "activations", "weight_cases", mode="before")
    @classmethod
    def _split(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("depths", "widths")
    @classmethod
    def _check_sizes(cls, values: tuple[int, ...]) -> tuple[int, ...]:
        if not values or any(value < 1 for value in values):
            raise ValueError("grid sizes must be positive integers")
        return values

    @field_validator("weight_cases")
    @classmethod
    def _check_cases(cls, cases: tuple[int, ...]) -> tuple[int, ...]:
        unknown = [case for case in cases if case not in WEIGHT_CASES]
        if unknown:
            raise ValueError(f"unknown weight cases {unknown}, expected 1 to 7")
        return cases

    @classmethod
    def load(
        cls, path: Union[str, Path], overrides: Optional[dict[str, Any]] = None
    ) -> AblationConfig:
        parser = _read_ini(path)
        if not parser.has_section("ablation"):
            raise ConfigError(f"{path}: missing section [ablation]", field="ablation")
        values: dict[str, Any] = dict(parser.items("ablation"))
        if "base" in values:
            values["base"] = Path(path).parent / values["base"]
        if overrides and overrides.get("out") is not None:
            values["out"] = overrides["out"]
        try:
            return cls.model_validate(values)
        except ValidationError as error:
            raise _validation_error(error, path) from error

    def cells(self) -> list[AblationCell]:
        if self.axis == "architecture":
            return [
                AblationCell(
                    cell_id=f"depth{depth}_width{width}",
                    updates={"network": {"depth": depth, "width": width}},
                )
                for depth in self.depths
                for width in self.widths
            ]
        if self.axis == "activation":
            return [
                AblationCell(
                    cell_id=f"activation_{activation.value}",
                    updates={"network": {"activation": activation}},
                )
                for activation in self.activations
            ]
        return [
            AblationCell(
                cell_id=f"case{case}",
                updates={
                    "training": dict(zip(("w0", "w_ode", "w_y"), WEIGHT_CASES[case]))
                },
            )
            for case in self.weight_cases
        ]

    def output_dir(self, base: ExperimentConfig) -> Path:
        return Path(self.out or Path("runs") / f"ablation_{self.axis}_{base.experiment.system}")
