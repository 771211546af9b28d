from pinnobs.recorders.sqlalchemy import SqlRecorder

__all__ = ["SqlRecorder"]
