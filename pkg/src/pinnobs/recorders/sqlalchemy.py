from __future__ import annotations

from typing import Optional

from sqlalchemy import Column
from sqlalchemy import Float
from sqlalchemy import Integer
from sqlalchemy import String
from sqlalchemy import create_engine
from sqlalchemy import delete
from sqlalchemy.orm import declarative_base
from sqlalchemy.orm import sessionmaker

from pinnobs.abc import Recorder
from pinnobs.exceptions import RunNotFoundError
from pinnobs.records import CellResult
from pinnobs.records import HistoryEntry

Base = declarative_base()


class SqlRecorder(Recorder):
    """
    Recorder that persists training histories and ablation rows using SQLAlchemy.

    Saving under an existing id replaces the rows stored for it.

    Parameters
    ----------
    database_url : str
        Database connection URL (e.g., 'sqlite:///runs.db').
    name : str, optional
        Optional name identifier for the recorder.
    """

    def __init__(self, database_url: str, name: Optional[str] = None):
        super().__init__(name)
        self.database_url = database_url
        self.engine = create_engine(database_url)
        Base.metadata.create_all(self.engine)
        self.session_maker = sessionmaker(bind=self.engine)

    def save_history(self, run_id: str, entries: list[HistoryEntry]):
        with self.session_maker() as session:
            session.execute(delete(HistoryORM).where(HistoryORM.run_id == run_id))
            session.add_all(
                [HistoryORM.from_entry(run_id, position, e) for position, e in enumerate(entries)]
            )
            session.commit()

    def get_history(self, run_id: str) -> list[HistoryEntry]:
        with self.session_maker() as session:
            rows = (
                session.query(HistoryORM)
                .filter(HistoryORM.run_id == run_id)
                .order_by(HistoryORM.position)
                .all()
            )
            if not rows:
                raise RunNotFoundError(f"no history recorded for run {run_id!r}")
            return [row.to_entry() for row in rows]

    def save_cells(self, grid_id: str, rows: list[CellResult]):
        with self.session_maker() as session:
            session.execute(delete(CellORM).where(CellORM.grid_id == grid_id))
            session.add_all(
                [CellORM.from_cell(grid_id, position, row) for position, row in enumerate(rows)]
            )
            session.commit()

    def get_cells(self, grid_id: str) -> list[CellResult]:
        with self.session_maker() as session:
            rows = (
                session.query(CellORM)
                .filter(CellORM.grid_id == grid_id)
                .order_by(CellORM.position)
                .all()
            )
            if not rows:
                raise RunNotFoundError(f"no ablation rows recorded for grid {grid_id!r}")
            return [row.to_cell() for row in rows]


class HistoryORM(Base):
    """
    SQLAlchemy ORM model of one loss-history row.

    Columns
    -------
    id : int
        Primary key, autoincremented.
    run_id : str
        Run the row belongs to.
    position : int
        Order of the row within its run.
    iteration, total, mse0, mseg, msey
        The `HistoryEntry` fields.
    """

    __tablename__ = "history"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String, nullable=False, index=True)
    position = Column(Integer, nullable=False)
    iteration = Column(Integer, nullable=False)
    total = Column(Float, nullable=False)
    mse0 = Column(Float, nullable=False)
    mseg = Column(Float, nullable=False)
    msey = Column(Float, nullable=False)

    def __repr__(self):
        return (
            f"<HistoryORM(run_id={self.run_id}, iteration={self.iteration}, total={self.total})>"
        )

    @classmethod
    def from_entry(cls, run_id: str, position: int, entry: HistoryEntry) -> HistoryORM:
        return cls(run_id=run_id, position=position, **entry.model_dump())

    def to_entry(self) -> HistoryEntry:
        return HistoryEntry(
            iteration=self.iteration,
            total=self.total,
            mse0=self.mse0,
            mseg=self.mseg,
            msey=self.msey,
        )


class CellORM(Base):
    """SQLAlchemy ORM model of one ablation-grid row."""

    __tablename__ = "ablation_cells"

    id = Column(Integer, primary_key=True, autoincrement=True)
    grid_id = Column(String, nullable=False, index=True)
    position = Column(Integer, nullable=False)
    cell_id = Column(String, nullable=False)
    status = Column(String, nullable=False)
    rmse = Column(Float, nullable=True)
    mae = Column(Float, nullable=True)
    inference_ms = Column(Float, nullable=True)
    train_time_s = Column(Float, nullable=True)
    convergence_iteration = Column(Integer, nullable=True)
    stop_iteration = Column(Integer, nullable=True)
    best_loss = Column(Float, nullable=True)

    def __repr__(self):
        return f"<CellORM(grid_id={self.grid_id}, cell_id={self.cell_id}, status={self.status})>"

    @classmethod
    def from_cell(cls, grid_id: str, position: int, cell: CellResult) -> CellORM:
        return cls(grid_id=grid_id, position=position, **cell.model_dump())

    def to_cell(self) -> CellResult:
        return CellResult(
            cell_id=self.cell_id,
            status=self.status,
            rmse=self.rmse,
            mae=self.mae,
            inference_ms=self.inference_ms,
            train_time_s=self.train_time_s,
            convergence_iteration=self.convergence_iteration,
            stop_iteration=self.stop_iteration,
            best_loss=self.best_loss,
        )
