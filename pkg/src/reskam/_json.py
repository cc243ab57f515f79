from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any, Dict, List, TextIO, Union

import numpy as np

JsonObject = Dict[str, Any]
JsonArray = List[Any]
JsonScalar = Union[str, float, int, bool]
JsonValue = Union[JsonObject, JsonArray, JsonScalar, None]


class JsonSerializer(ABC):
    @staticmethod
    def create_fastest() -> JsonSerializer:
        try:
            import orjson  # noqa: F401

            return OrJsonSerializer()
        except ImportError:
            return BuiltinJsonSerializer()

    @abstractmethod
    def serialize(self, obj: JsonValue, encoding: str = "utf-8") -> bytes:
        raise NotImplementedError()

    @abstractmethod
    def deserialize(self, fp: TextIO) -> JsonValue:
        raise NotImplementedError()


class BuiltinJsonSerializer(JsonSerializer):
    def serialize(self, obj: JsonValue, encoding: str = "utf-8") -> bytes:
        import json

        return json.dumps(to_plain(obj), sort_keys=True, indent=2).encode(encoding)

    def deserialize(self, fp: TextIO) -> JsonValue:
        import json

        return json.load(fp)


class OrJsonSerializer(JsonSerializer):
    def serialize(self, obj: JsonValue, encoding: str = "utf-8") -> bytes:
        import orjson

        return orjson.dumps(
            to_plain(obj),
            option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2,
        )

    def deserialize(self, fp: TextIO) -> JsonValue:
        import orjson

        return orjson.loads(fp.read())


def to_plain(obj: Any) -> JsonValue:
    """
    Convert numpy scalars, arrays, tuples and complex numbers into plain JSON values.

    Non-finite floats become strings so both serializers produce the same bytes.
    """
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_plain(obj.real), to_plain(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    return obj
