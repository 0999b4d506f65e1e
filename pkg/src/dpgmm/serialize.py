"""Canonical JSON serialization for all file artifacts.

Floats are written with 17 significant digits so that every artifact
round-trips bit-exactly; rerunning a command with the same inputs and seed
must reproduce files byte for byte.
"""

import json
import math

from .errors import SchemaMismatch


def _format_float(x):
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def _encode(obj, parts):
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(_format_float(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _encode(item, parts)
        parts.append("]")
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(key)))
            parts.append(":")
            _encode(value, parts)
        parts.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj):
    """Canonical JSON text (insertion-ordered keys, 17-digit floats)."""
    parts = []
    _encode(obj, parts)
    return "".join(parts)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps(obj))
        handle.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def expect_key(data, path, kind):
    """Fetch a nested value by dotted path, checking its type."""
    key = path.split(".")[-1].split("[")[0]
    if not isinstance(data, dict) or key not in data:
        raise SchemaMismatch(f"missing field {path}")
    value = data[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise SchemaMismatch(
            f"field {path}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def expect_list(data, path, item_kind):
    values = expect_key(data, path, list)
    out = []
    for i, item in enumerate(values):
        if item_kind is float and isinstance(item, int):
            item = float(item)
        if not isinstance(item, item_kind):
            raise SchemaMismatch(
                f"field {path}[{i}]: expected {item_kind.__name__},"
                f" got {type(item).__name__}"
            )
        out.append(item)
    return out
