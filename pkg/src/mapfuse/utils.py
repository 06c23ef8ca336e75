from __future__ import annotations

import hashlib
import json
from copy import deepcopy
from types import MappingProxyType
from typing import Any, Dict, Iterable, Mapping

__all__ = [
    "_immutable_copy",
    "_stable_serialize",
    "_checksum_of_results",
    "strip_keys",
]

TIMING_KEYS = frozenset(
    {
        "wall_time_seconds",
        "median_wall_time_seconds",
        "scale_time_seconds",
        "timings",
        "elapsed",
        "timestamp",
        "offset",
    }
)


def _immutable_copy(value: Any) -> Any:
    try:
        return _recursive_immutable_copy(value)
    except Exception as e:
        raise ValueError("Value is not deepcopy-able") from e


def _recursive_immutable_copy(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_recursive_immutable_copy(v) for v in value)
    if isinstance(value, dict):
        return MappingProxyType({k: _recursive_immutable_copy(v) for k, v in value.items()})
    return deepcopy(value)


def strip_keys(data: Any, keys: Iterable[str] = TIMING_KEYS) -> Any:
    """Recursively drop mapping entries whose key is in ``keys``."""
    drop = frozenset(keys)
    if isinstance(data, Mapping):
        return {k: strip_keys(v, drop) for k, v in data.items() if k not in drop}
    if isinstance(data, (list, tuple)):
        return [strip_keys(v, drop) for v in data]
    return data


def _stable_serialize(data: Any) -> bytes:
    return json.dumps(data, separators=(",", ":"), sort_keys=True, default=repr).encode("utf-8")


def _checksum_of_results(results: Dict[str, Any], algorithm: str = "sha256") -> str:
    """Checksum of a results document with every timing field removed."""
    return hashlib.new(algorithm, _stable_serialize(strip_keys(results))).hexdigest()
