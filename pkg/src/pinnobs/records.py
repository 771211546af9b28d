from __future__ import annotations

from typing import Optional

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field


class LossBreakdown(BaseModel):
    """
    The composite physics-informed loss and its three terms.

    Attributes
    ----------
    total : float
        ``w0 * mse0 + w_ode * mseg + w_y * msey``.
    mse0 : float
        Mismatch between the network estimate at ``t0`` and the observer's
        initial estimate.
    mseg : float
        Mean squared observer-ODE residual over the collocation points.
    msey : float
        Mean squared output mismatch over the training samples.
    """

    model_config = ConfigDict(frozen=True)

    total: float = Field(ge=0)
    mse0: float = Field(ge=0)
    mseg: float = Field(ge=0)
    msey: float = Field(ge=0)


class HistoryEntry(LossBreakdown):
    """A loss breakdown tagged with the training iteration it was evaluated at."""

    iteration: int = Field(ge=0)

    @classmethod
    def from_breakdown(cls, iteration: int, breakdown: LossBreakdown) -> HistoryEntry:
        return cls(iteration=iteration, **breakdown.model_dump())


class CellResult(BaseModel):
    """
    One row of an ablation grid.

    ``status`` holds the error message of a failed cell. Its training fields
    are filled when training finished, the others stay ``None``.
    """

    cell_id: str
    status: str = "ok"
    rmse: Optional[float] = None
    mae: Optional[float] = None
    inference_ms: Optional[float] = None
    train_time_s: Optional[float] = None
    convergence_iteration: Optional[int] = None
    stop_iteration: Optional[int] = None
    best_loss: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"
