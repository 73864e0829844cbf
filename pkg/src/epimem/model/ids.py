"""Hierarchical path keys.

An ID names anything in the system by its path through the hierarchy:
memory / core segment / provider segment / entity / timestamp / instance.
Components are prefix-complete: a component may only be set when everything
above it is set. Name components must be non-empty and free of '/'.

Timestamps render as `YYYY-MM-DD HH:MM:SS.ffffff` (UTC, six fractional
digits); a bare decimal integer of microseconds is accepted on parse and is
used on output for times outside the renderable year range.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_TS_RE = re.compile(r"(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})\.(\d{6})")
_NUM_RE = re.compile(r"-?\d+")

LEVELS = ("memory", "core segment", "provider segment", "entity", "snapshot", "instance")


class IdError(ValueError):
    pass


def format_timestamp(micros: int) -> str:
    seconds, frac = divmod(micros, 1_000_000)
    try:
        dt = _EPOCH + timedelta(seconds=seconds)
    except OverflowError:
        return str(micros)
    return (
        f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d} "
        f"{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}.{frac:06d}"
    )


def parse_timestamp(text: str) -> int:
    if _NUM_RE.fullmatch(text):
        return int(text)
    m = _TS_RE.fullmatch(text)
    if m is None:
        raise IdError(f"bad timestamp {text!r}")
    year, month, day, hour, minute, second, frac = (int(g) for g in m.groups())
    try:
        dt = datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
    except ValueError as exc:
        raise IdError(f"bad timestamp {text!r}: {exc}") from None
    delta = dt - _EPOCH
    return (delta.days * 86_400 + delta.seconds) * 1_000_000 + frac


@dataclass(frozen=True, order=True)
class MemoryID:
    memory_name: str
    core_segment: str | None = None
    provider_segment: str | None = None
    entity_name: str | None = None
    timestamp: int | None = None
    instance_index: int | None = None

    def __post_init__(self):
        components = (
            self.memory_name,
            self.core_segment,
            self.provider_segment,
            self.entity_name,
            self.timestamp,
            self.instance_index,
        )
        seen_unset = False
        for level, value in zip(LEVELS, components):
            if value is None:
                seen_unset = True
                continue
            if seen_unset:
                raise IdError(f"{level} set but a component above it is unset")
            if isinstance(value, str):
                if not value:
                    raise IdError(f"empty {level} name")
                if "/" in value:
                    raise IdError(f"{level} name contains '/': {value!r}")
        if self.instance_index is not None and self.instance_index < 0:
            raise IdError(f"negative instance index {self.instance_index}")

    @property
    def components(self) -> tuple:
        parts = [
            self.memory_name,
            self.core_segment,
            self.provider_segment,
            self.entity_name,
            self.timestamp,
            self.instance_index,
        ]
        return tuple(p for p in parts if p is not None)

    @property
    def level(self) -> int:
        return len(self.components)

    def is_prefix_of(self, other: "MemoryID") -> bool:
        mine = self.components
        theirs = other.components
        return len(mine) <= len(theirs) and mine == theirs[: len(mine)]

    def truncated(self, level: int) -> "MemoryID":
        parts = [
            self.memory_name,
            self.core_segment,
            self.provider_segment,
            self.entity_name,
            self.timestamp,
            self.instance_index,
        ]
        for i in range(level, 6):
            parts[i] = None
        return _unchecked(*parts)

    @property
    def entity_id(self) -> "MemoryID":
        return self.truncated(4)

    def with_snapshot(self, timestamp: int) -> "MemoryID":
        if self.entity_name is None:
            raise IdError("snapshot component requires an entity component")
        return _unchecked(
            self.memory_name,
            self.core_segment,
            self.provider_segment,
            self.entity_name,
            timestamp,
            None,
        )

    def with_instance(self, index: int) -> "MemoryID":
        if self.timestamp is None:
            raise IdError("instance component requires a snapshot component")
        return replace(self, instance_index=index)


_FIELDS = (
    "memory_name",
    "core_segment",
    "provider_segment",
    "entity_name",
    "timestamp",
    "instance_index",
)


def _unchecked(*parts) -> MemoryID:
    """Construct from components already known valid; skips re-validation.
    Derivations from an existing ID stay on this path (hot in query results)."""
    mid = object.__new__(MemoryID)
    for name, value in zip(_FIELDS, parts):
        object.__setattr__(mid, name, value)
    return mid


def parse_id(text: str) -> MemoryID:
    parts = text.split("/")
    if len(parts) > 6:
        raise IdError(f"more than 6 components in {text!r}")
    for level, part in zip(LEVELS[:4], parts[:4]):
        if not part:
            raise IdError(f"empty {level} component in {text!r}")
    kwargs: dict = {"memory_name": parts[0]}
    if len(parts) > 1:
        kwargs["core_segment"] = parts[1]
    if len(parts) > 2:
        kwargs["provider_segment"] = parts[2]
    if len(parts) > 3:
        kwargs["entity_name"] = parts[3]
    if len(parts) > 4:
        kwargs["timestamp"] = parse_timestamp(parts[4])
    if len(parts) > 5:
        if not _NUM_RE.fullmatch(parts[5]) or parts[5].startswith("-"):
            raise IdError(f"bad instance index {parts[5]!r}")
        kwargs["instance_index"] = int(parts[5])
    return MemoryID(**kwargs)


def format_id(mid: MemoryID) -> str:
    parts = [mid.memory_name]
    if mid.core_segment is not None:
        parts.append(mid.core_segment)
    if mid.provider_segment is not None:
        parts.append(mid.provider_segment)
    if mid.entity_name is not None:
        parts.append(mid.entity_name)
    if mid.timestamp is not None:
        parts.append(format_timestamp(mid.timestamp))
    if mid.instance_index is not None:
        parts.append(str(mid.instance_index))
    return "/".join(parts)
