"""Online filtering of consolidated snapshots.

A snapshot is kept iff (a) its timestamp is at least 1/max_hz seconds after
the last kept one (the first is always kept) and (b) the L2 distance of its
flattened numeric leaves to the last kept snapshot is at least
similarity_epsilon. Layout mismatches satisfy (b) unconditionally; the rate
clause always applies, so kept output never exceeds max_hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..idf import DataObject
from .flatten import decompose


@dataclass(frozen=True)
class FilterPolicy:
    max_hz: float = math.inf
    similarity_epsilon: float = 0.0

    def __post_init__(self):
        if not self.max_hz > 0:
            raise ValueError(f"max_hz must be positive, got {self.max_hz}")
        if self.similarity_epsilon < 0:
            raise ValueError("similarity_epsilon must be >= 0")

    @property
    def min_spacing_us(self) -> int:
        if math.isinf(self.max_hz):
            return 0
        return int(round(1_000_000 / self.max_hz))


class FilterState:
    """Streaming filter; tracks the last kept snapshot per timeline."""

    def __init__(self, policy: FilterPolicy):
        self.policy = policy
        self.last_kept_ts: int | None = None
        self.last_layout = None
        self.last_vector: np.ndarray | None = None

    def admit(self, timestamp: int, value: DataObject) -> bool:
        if self.last_kept_ts is None:
            self._keep(timestamp, value)
            return True
        if timestamp - self.last_kept_ts < self.policy.min_spacing_us:
            return False
        if self.policy.similarity_epsilon > 0:
            layout, vector, _ = decompose(value)
            if layout == self.last_layout and self.last_vector is not None:
                distance = float(np.linalg.norm(vector - self.last_vector))
                if distance < self.policy.similarity_epsilon:
                    return False
        self._keep(timestamp, value)
        return True

    def _keep(self, timestamp: int, value: DataObject) -> None:
        self.last_kept_ts = timestamp
        if self.policy.similarity_epsilon > 0:
            layout, vector, _ = decompose(value)
            self.last_layout = layout
            self.last_vector = vector


def filter_snapshots(
    snapshots: Sequence[tuple[int, DataObject]], policy: FilterPolicy
) -> list[tuple[int, DataObject]]:
    """Pure form over a time-ordered (timestamp, value) sequence."""
    state = FilterState(policy)
    return [(ts, value) for ts, value in snapshots if state.admit(ts, value)]
