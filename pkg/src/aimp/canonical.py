"""Canonical JSON for content hashing.

Keys sorted by code point (identical to UTF-8 byte order), no insignificant
whitespace, UTF-8 without ASCII escaping, NaN/Infinity rejected. Floats are
not allowed at all: fractional numbers travel as decimal strings so the
bytes never depend on a platform's float formatting.
"""

from __future__ import annotations

import hashlib
import json
import math
from decimal import Decimal
from typing import Any


def _check(obj: Any, path: str = "$") -> None:
    if isinstance(obj, float):
        raise ValueError(f"{path}: floats are not canonical, use decimal_string()")
    if isinstance(obj, dict):
        for k, v in obj.items():
            if not isinstance(k, str):
                raise ValueError(f"{path}: non-string key {k!r}")
            _check(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check(v, f"{path}[{i}]")


def canonical_bytes(obj: Any) -> bytes:
    _check(obj)
    return json.dumps(
        obj,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def canonical_hash(obj: Any) -> str:
    """Lowercase hex sha256 of ``canonical_bytes(obj)``."""
    return hashlib.sha256(canonical_bytes(obj)).hexdigest()


def decimal_string(value: float | int | str | Decimal) -> str:
    """Shortest round-trip decimal text for a finite number, no exponent.

    >>> decimal_string(0.1)
    '0.1'
    >>> decimal_string(1e-05)
    '0.00001'
    >>> decimal_string(3)
    '3'
    """
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers here")
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        d = Decimal(repr(value))
    else:
        d = Decimal(str(value))
        if not d.is_finite():
            raise ValueError(f"non-finite value {value!r}")
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def load(data: bytes | str) -> Any:
    return json.loads(data)
