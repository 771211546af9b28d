"""JSON hooks for the checkpoint format."""

from __future__ import annotations

from typing import Any
from typing import Iterable

import numpy as np

from pinnobs.abc import Transcoder

KEY = "_key_"
VALUE = "_value_"


class NDArrayTranscoder(Transcoder):
    """
    Transcoder for float64 numpy arrays.

    Values are written in row-major order as ``float.hex`` strings so that a
    decoded array is bit-identical to the encoded one.
    """

    def __init__(self):
        self.name = "__ndarray__"
        self._class = np.ndarray

    def encode(self, data: np.ndarray) -> dict:
        data = np.asarray(data, dtype=np.float64)
        return {
            "shape": list(data.shape),
            "data": [float(value).hex() for value in data.ravel(order="C")],
        }

    def decode(self, encoded_data: dict) -> np.ndarray:
        values = [float.fromhex(value) for value in encoded_data["data"]]
        return np.array(values, dtype=np.float64).reshape(encoded_data["shape"])


class TranscoderStore:
    """
    ``default`` and ``object_hook`` callbacks for `json.dumps` / `json.loads`.

    Examples
    --------
    >>> store = TranscoderStore()
    >>> encoded = json.dumps({"w": np.eye(2)}, default=store.default)
    >>> decoded = json.loads(encoded, object_hook=store.object_hook)
    """

    def __init__(self, transcoders: Iterable[Transcoder] = (NDArrayTranscoder(),)):
        transcoders = list(transcoders)
        self._by_name = {transcoder.name: transcoder for transcoder in transcoders}
        self._by_class = {transcoder._class: transcoder for transcoder in transcoders}

    def default(self, obj: Any) -> dict:
        transcoder = self._by_class.get(type(obj))
        if transcoder is None:
            raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")
        return {KEY: transcoder.name, VALUE: transcoder.encode(obj)}

    def object_hook(self, obj: dict) -> Any:
        if KEY in obj and VALUE in obj and obj[KEY] in self._by_name:
            return self._by_name[obj[KEY]].decode(obj[VALUE])
        return obj
