from typing import Optional


class PinnObsError(Exception):
    pass


class TapeConsumedError(PinnObsError):
    pass


class NumericalError(PinnObsError):
    pass


class ShapeError(PinnObsError):
    pass


class TrajectoryEscapeError(NumericalError):
    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class DivergenceError(NumericalError):
    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class OutOfRangeError(PinnObsError):
    pass


class GridMismatchError(PinnObsError):
    pass


class ConfigError(PinnObsError):
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class UnknownSystemError(ConfigError):
    pass


class RunNotFoundError(PinnObsError):
    pass
