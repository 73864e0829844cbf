"""Working-memory capacity enforcement planning.

Eviction candidates are ranked oldest-first by snapshot timestamp across the
whole store. Protected and therefore skipped: hot entities (queried at least
H times within the window W) and entities linked to by any hot entity. The
latest snapshot of an entity is never evicted. A snapshot is scheduled while
the store is over its byte budget or its entity exceeds the per-entity cap.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..idf.sizing import payload_size
from ..model.ids import format_id
from ..model.store import Entity, MemoryStore


@dataclass(frozen=True)
class CapacityParams:
    wm_max_bytes: int
    wm_max_snapshots_per_entity: int
    hot_query_threshold: int
    hot_window_us: int


def hot_entities(store: MemoryStore, params: CapacityParams, now: int) -> set[str]:
    hot = set()
    for entity in store.entities():
        count = entity.stats.queries_within(now, params.hot_window_us)
        if count >= params.hot_query_threshold:
            hot.add(format_id(entity.entity_id))
    return hot


def protected_entities(store: MemoryStore, params: CapacityParams, now: int) -> set[str]:
    hot = hot_entities(store, params, now)
    protected = set(hot)
    for entity in store.entities():
        if format_id(entity.entity_id) not in hot:
            continue
        for _, target in entity.links:
            protected.add(format_id(target.entity_id))
    return protected


def plan_evictions(
    store: MemoryStore, params: CapacityParams, now: int
) -> list[tuple[Entity, int]]:
    """(entity, timestamp) pairs to consolidate and evict, in eviction order."""
    with store.lock:
        if store.wm_bytes <= params.wm_max_bytes and all(
            len(entity.order) <= params.wm_max_snapshots_per_entity
            for entity in store.entities()
        ):
            return []
        protected = protected_entities(store, params, now)
        total = store.wm_bytes
        counts: dict[str, int] = {}
        candidates: list[tuple[int, str, Entity, int]] = []
        for entity in store.entities():
            key = format_id(entity.entity_id)
            counts[key] = len(entity.order)
            if key in protected:
                continue
            for ts in entity.order[:-1]:
                size = sum(payload_size(i.data) for i in entity.timeline[ts].instances)
                candidates.append((ts, key, entity, size))
        candidates.sort(key=lambda row: (row[0], row[1]))

        plan: list[tuple[Entity, int]] = []
        for ts, key, entity, size in candidates:
            if total <= params.wm_max_bytes and counts[key] <= params.wm_max_snapshots_per_entity:
                continue
            plan.append((entity, ts))
            total -= size
            counts[key] -= 1
        return plan
