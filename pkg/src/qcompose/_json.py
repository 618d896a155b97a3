"""Conversions between package values and JSON-compatible data."""

from __future__ import annotations

import math
from typing import Any

FLOAT_DIGITS = 12


def jsonable(value: Any) -> Any:
    """Tuples become lists and floats are rounded so that reports are byte-stable."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        r = round(value, FLOAT_DIGITS)
        return 0.0 if r == 0 else r
    if hasattr(value, "item") and not hasattr(value, "__len__"):
        return jsonable(value.item())
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(jsonable(v) for v in value)
    return repr(value)


def from_json(value: Any) -> Any:
    """Lists become tuples recursively, so loaded values are hashable."""
    if isinstance(value, list):
        return tuple(from_json(v) for v in value)
    if isinstance(value, dict):
        return {k: from_json(v) for k, v in value.items()}
    return value
