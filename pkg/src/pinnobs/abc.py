from __future__ import annotations

from abc import ABC
from abc import abstractmethod
from typing import Any
from typing import Optional

from pinnobs.records import CellResult
from pinnobs.records import HistoryEntry


class Recorder(ABC):
    """
    Abstract base class for recorders that store training histories and ablation rows.

    Attributes
    ----------
    name : str or None
        Optional name identifier for the recorder.
    """

    name: Optional[str] = None

    def __init__(self, name: Optional[str] = None):
        self.name = name

    @abstractmethod
    def save_history(self, run_id: str, entries: list[HistoryEntry]):
        """
        Store the loss history of one training run.

        Parameters
        ----------
        run_id : str
            Identifier of the run (its output directory name).
        entries : list of HistoryEntry
            History rows in iteration order. Saving again under the same id
            replaces the previous rows.
        """
        pass

    @abstractmethod
    def get_history(self, run_id: str) -> list[HistoryEntry]:
        """
        Retrieve the loss history of a run.

        Raises
        ------
        RunNotFoundError
            If nothing was saved under ``run_id``.
        """
        pass

    @abstractmethod
    def save_cells(self, grid_id: str, rows: list[CellResult]):
        """
        Store the rows of an ablation grid.

        Parameters
        ----------
        grid_id : str
            Identifier of the grid.
        rows : list of CellResult
            One row per cell, in grid order.
        """
        pass

    @abstractmethod
    def get_cells(self, grid_id: str) -> list[CellResult]:
        """
        Retrieve the rows of an ablation grid, in the order they were saved.

        Raises
        ------
        RunNotFoundError
            If nothing was saved under ``grid_id``.
        """
        pass


class Transcoder(ABC):
    """
    Abstract base class for data transcoders that serialize and deserialize specific types.

    Each transcoder defines how to encode a value of a specific class into a
    JSON-compatible representation and decode it back into its original type.

    Attributes
    ----------
    name : str
        A unique name identifying the transcoder (e.g., "__ndarray__").
    _class : type
        The data type this transcoder handles (e.g., `numpy.ndarray`).
    """

    name: str
    _class: type

    @abstractmethod
    def encode(self, data: Any) -> Any:
        """
        Encode a value to a JSON-compatible object.

        Parameters
        ----------
        data : Any
            The value to encode.
        """
        pass

    @abstractmethod
    def decode(self, encoded_data: Any) -> Any:
        """
        Decode a JSON-compatible object back to a value of `_class`.

        Parameters
        ----------
        encoded_data : Any
            The object produced by `encode`.
        """
        pass
