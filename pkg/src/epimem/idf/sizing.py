"""Semantic payload size: bytes of information carried by a value.

Containers add zero overhead; map keys, tags and length prefixes do not
count. This is the accounting used for working-memory budgets and the
benchmark payload classes.
"""

from __future__ import annotations

from .values import (
    Bool,
    DataObject,
    Float32,
    Float64,
    Int32,
    Int64,
    List,
    Map,
    NDArray,
    Null,
    String,
    Time,
)


def payload_size(value: DataObject) -> int:
    if isinstance(value, Null):
        return 0
    if isinstance(value, Bool):
        return 1
    if isinstance(value, (Int32, Float32)):
        return 4
    if isinstance(value, (Int64, Float64, Time)):
        return 8
    if isinstance(value, String):
        return len(value.value.encode("utf-8"))
    if isinstance(value, NDArray):
        return len(value.data)
    if isinstance(value, List):
        return sum(payload_size(item) for item in value.items)
    if isinstance(value, Map):
        return sum(payload_size(item) for item in value.entries.values())
    raise TypeError(f"not a DataObject: {type(value).__name__}")
