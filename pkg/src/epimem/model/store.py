"""The working memory: a hierarchical, inherently episodic in-memory store.

Memory -> core segments -> provider segments -> entities -> snapshot
timelines. Core segments are declared up front and may carry a type that
committed instances must minimally conform to. Providers and entities are
created on first commit. The store supports many concurrent readers or one
writer; all public operations take the store lock.
"""

from __future__ import annotations

import bisect
import threading
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Protocol

from ..idf import DataObject, Int64, Map, ObjectType, String, TypeObject, conformance_gaps
from ..idf.sizing import payload_size
from .ids import MemoryID, format_id
from .query import (
    CoreBranch,
    EntityBranch,
    InstanceIndex,
    ProviderBranch,
    Query,
    QueryResult,
    SnapshotBranch,
    name_matches,
    select_timestamps,
)
from .records import (
    Commit,
    CommitResult,
    EntityInstance,
    EntitySnapshot,
    Tier,
    UpdateNotification,
    UpdateStatus,
)


class HistorySource(Protocol):
    """Consolidated history an entity's timeline can transparently extend into."""

    def timestamps(self, entity_id: MemoryID) -> list[int]: ...

    def fetch(self, entity_id: MemoryID, timestamp: int) -> EntitySnapshot: ...


class UnknownCoreSegment(KeyError):
    pass


class UnknownEntity(KeyError):
    pass


def now_us() -> int:
    return time.time_ns() // 1_000


def _id_sort_key(mid: MemoryID):
    return mid.components


@dataclass
class EntityStats:
    query_count: int = 0
    last_query_time: int | None = None
    last_commit_time: int | None = None
    recent_query_times: deque = field(default_factory=deque)

    def record_query(self, at: int, window_us: int) -> None:
        self.query_count += 1
        self.last_query_time = at
        self.recent_query_times.append(at)
        self.trim(at, window_us)

    def trim(self, at: int, window_us: int) -> None:
        while self.recent_query_times and self.recent_query_times[0] < at - window_us:
            self.recent_query_times.popleft()

    def queries_within(self, at: int, window_us: int) -> int:
        self.trim(at, window_us)
        return len(self.recent_query_times)


class Entity:
    """A named timeline of snapshots plus its associations and access stats."""

    def __init__(self, entity_id: MemoryID):
        self.entity_id = entity_id
        self.timeline: dict[int, EntitySnapshot] = {}
        self.order: list[int] = []
        self.links: set[tuple[MemoryID, MemoryID]] = set()
        self.stats = EntityStats()
        self.payload_bytes = 0

    @property
    def name(self) -> str:
        return self.entity_id.entity_name  # type: ignore[return-value]

    def insert(self, snapshot: EntitySnapshot) -> int:
        """Insert or replace; returns the change in payload bytes."""
        delta = sum(payload_size(inst.data) for inst in snapshot.instances)
        old = self.timeline.get(snapshot.timestamp)
        if old is not None:
            delta -= sum(payload_size(inst.data) for inst in old.instances)
        else:
            bisect.insort(self.order, snapshot.timestamp)
        self.timeline[snapshot.timestamp] = snapshot
        self.payload_bytes += delta
        return delta

    def remove(self, timestamp: int) -> EntitySnapshot:
        snapshot = self.timeline.pop(timestamp)
        self.order.remove(timestamp)
        self.payload_bytes -= sum(payload_size(i.data) for i in snapshot.instances)
        return snapshot

    @property
    def latest_timestamp(self) -> int | None:
        return self.order[-1] if self.order else None

    def snapshot_id(self, timestamp: int) -> MemoryID:
        return self.entity_id.with_snapshot(timestamp)


class ProviderSegment:
    def __init__(self, name: str, extension_type: ObjectType | None = None):
        self.name = name
        self.extension_type = extension_type
        self.entities: dict[str, Entity] = {}


class CoreSegment:
    def __init__(self, name: str, core_type: ObjectType | None = None):
        self.name = name
        self.core_type = core_type
        self.providers: dict[str, ProviderSegment] = {}

    def declare_provider(
        self, name: str, extension_type: ObjectType | None = None
    ) -> ProviderSegment:
        if extension_type is not None and self.core_type is not None:
            missing = [
                f for f in self.core_type.required_fields if f not in extension_type.fields
            ]
            if missing:
                raise ValueError(
                    f"provider type for {name!r} lacks core fields {missing}"
                )
        segment = self.providers.get(name)
        if segment is None:
            segment = self.providers[name] = ProviderSegment(name, extension_type)
        elif extension_type is not None:
            segment.extension_type = extension_type
        return segment


class MemoryStore:
    """One memory server's working memory."""

    def __init__(self, name: str, hot_window_us: int = 30_000_000):
        self.name = name
        self.core_segments: dict[str, CoreSegment] = {}
        self.lock = threading.RLock()
        self.seq = 0
        self.wm_bytes = 0
        self.hot_window_us = hot_window_us

    # --- structure ----------------------------------------------------------

    def declare_core_segment(
        self, name: str, core_type: ObjectType | None = None
    ) -> CoreSegment:
        with self.lock:
            segment = self.core_segments.get(name)
            if segment is None:
                segment = self.core_segments[name] = CoreSegment(name, core_type)
            elif core_type is not None:
                segment.core_type = core_type
            return segment

    def find_entity(self, mid: MemoryID) -> Entity | None:
        if mid.memory_name != self.name or mid.entity_name is None:
            return None
        core = self.core_segments.get(mid.core_segment)
        if core is None:
            return None
        provider = core.providers.get(mid.provider_segment)
        if provider is None:
            return None
        return provider.entities.get(mid.entity_name)

    def entities(self) -> list[Entity]:
        return [
            entity
            for core in self.core_segments.values()
            for provider in core.providers.values()
            for entity in provider.entities.values()
        ]

    def snapshot_count(self) -> int:
        return sum(len(e.timeline) for e in self.entities())

    # --- commits ------------------------------------------------------------

    def apply_commit(self, commit: Commit, received_at: int | None = None) -> CommitResult:
        """Apply each entity update independently; failed updates reject only
        themselves. Returns per-update statuses and the notification listing
        exactly the snapshots created or replaced."""
        received_at = now_us() if received_at is None else received_at
        with self.lock:
            self.seq += 1
            statuses: list[UpdateStatus] = []
            touched: list[MemoryID] = []
            for update in commit.updates:
                status = self._apply_update(update, received_at)
                statuses.append(status)
                if status.ok and status.snapshot_id is not None:
                    touched.append(status.snapshot_id)
            notification = UpdateNotification(ids=tuple(touched), seq=self.seq)
            return CommitResult(tuple(statuses), notification)

    def _apply_update(self, update, received_at: int) -> UpdateStatus:
        eid = update.entity_id
        if eid.memory_name != self.name:
            return UpdateStatus(
                ok=False,
                code="wrong-memory",
                message=f"update for memory {eid.memory_name!r}, this is {self.name!r}",
            )
        core = self.core_segments.get(eid.core_segment)
        if core is None:
            return UpdateStatus(
                ok=False,
                code="unknown-core-segment",
                message=f"core segment {eid.core_segment!r} is not declared",
            )
        if not update.instances:
            return UpdateStatus(
                ok=False, code="empty-update", message="update carries no instances"
            )
        provider = core.declare_provider(eid.provider_segment)
        check_type: TypeObject | None = provider.extension_type or core.core_type
        if check_type is not None:
            for data in update.instances:
                gaps = conformance_gaps(data, check_type)
                if gaps:
                    return UpdateStatus(
                        ok=False,
                        code="type-conformance",
                        message=f"instance does not conform to {eid.core_segment!r} type",
                        uninitialized=tuple(gaps),
                    )
        entity = provider.entities.get(eid.entity_name)
        if entity is None:
            entity = provider.entities[eid.entity_name] = Entity(eid)
        instances = tuple(
            EntityInstance(
                index=i,
                data=data,
                metadata=self._instance_metadata(update, data, received_at),
            )
            for i, data in enumerate(update.instances)
        )
        snapshot = EntitySnapshot(update.timestamp, instances, tier=Tier.WM)
        self.wm_bytes += entity.insert(snapshot)
        entity.stats.last_commit_time = received_at
        snapshot_id = entity.snapshot_id(update.timestamp)
        for target in update.links:
            self._add_link(entity, snapshot_id, target)
        return UpdateStatus(ok=True, snapshot_id=snapshot_id)

    def _instance_metadata(self, update, data: DataObject, received_at: int) -> Map:
        meta: dict[str, DataObject] = {
            "provider": String(update.entity_id.provider_segment),
            "size": Int64(payload_size(data)),
        }
        if update.produced_at is not None:
            meta["transfer_us"] = Int64(max(0, received_at - update.produced_at))
        return Map(meta)

    # --- associations -------------------------------------------------------

    def link(self, source: MemoryID, target: MemoryID) -> None:
        with self.lock:
            entity = self.find_entity(source)
            if entity is None:
                raise UnknownEntity(f"no entity owns {source}")
            self._add_link(entity, source, target)

    def _add_link(self, entity: Entity, source: MemoryID, target: MemoryID) -> None:
        if entity.entity_id.is_prefix_of(target):
            raise ValueError(f"link target {target} is inside the source's own timeline")
        entity.links.add((source, target))

    def evict_snapshot(self, entity: Entity, timestamp: int) -> EntitySnapshot:
        with self.lock:
            before = entity.payload_bytes
            snapshot = entity.remove(timestamp)
            self.wm_bytes += entity.payload_bytes - before
            return snapshot

    def links_of(self, source: MemoryID) -> frozenset[MemoryID]:
        with self.lock:
            entity = self.find_entity(source)
            if entity is None:
                return frozenset()
            return frozenset(t for s, t in entity.links if s == source)

    # --- queries ------------------------------------------------------------

    def resolve_query(
        self,
        query: Query,
        record: bool = True,
        at: int | None = None,
        history: "HistorySource | None" = None,
    ) -> QueryResult:
        """Resolve against the working memory; when a `history` source is
        given, its timestamps merge into each entity's timeline and snapshots
        absent from WM are fetched from it (consolidated history)."""
        with self.lock:
            result = QueryResult(self.name)
            touched: dict[int, Entity] = {}
            for core_branch in query.cores:
                self._resolve_core(core_branch, query, result, touched, history)
            if record and touched:
                at = now_us() if at is None else at
                for entity in touched.values():
                    entity.stats.record_query(at, self.hot_window_us)
            result.ids = sorted(set(result.ids), key=_id_sort_key)
            return result

    def _resolve_core(
        self,
        branch: CoreBranch,
        query: Query,
        result: QueryResult,
        touched: dict[int, Entity],
        history: "HistorySource | None",
    ) -> None:
        for name, core in self.core_segments.items():
            if not name_matches(branch.select, name):
                continue
            for provider_branch in branch.providers:
                self._resolve_provider(
                    core, provider_branch, query, result, touched, history
                )

    def _resolve_provider(
        self,
        core: CoreSegment,
        branch: ProviderBranch,
        query: Query,
        result: QueryResult,
        touched: dict[int, Entity],
        history: "HistorySource | None",
    ) -> None:
        for name, provider in core.providers.items():
            if not name_matches(branch.select, name):
                continue
            for entity_branch in branch.entities:
                self._resolve_entity(
                    provider, entity_branch, query, result, touched, history
                )

    def _resolve_entity(
        self,
        provider: ProviderSegment,
        branch: EntityBranch,
        query: Query,
        result: QueryResult,
        touched: dict[int, Entity],
        history: "HistorySource | None",
    ) -> None:
        for name, entity in provider.entities.items():
            if not name_matches(branch.select, name):
                continue
            timeline = entity.order
            if history is not None:
                extra = history.timestamps(entity.entity_id)
                if extra:
                    timeline = sorted(set(entity.order) | set(extra))
            matched = False
            for snapshot_branch in branch.snapshots:
                for ts in select_timestamps(snapshot_branch.select, timeline):
                    stored = entity.timeline.get(ts)
                    if stored is None:
                        assert history is not None
                        try:
                            stored = history.fetch(entity.entity_id, ts)
                        except Exception as exc:
                            sid = format_id(entity.entity_id.with_snapshot(ts))
                            result.entity_status[sid] = f"recall-failed: {exc}"
                            continue
                    snapshot = self._project(stored, snapshot_branch)
                    if snapshot is None:
                        continue
                    result.add_snapshot(entity.entity_id, snapshot)
                    matched = True
            if matched:
                touched[id(entity)] = entity
                if query.include_links:
                    result.entity(entity.entity_id).links = tuple(sorted(entity.links))

    def matching_entities(self, query: Query) -> list[tuple[Entity, "SnapshotBranch"]]:
        """(entity, snapshot branch) pairs selected by the query's name levels."""
        pairs = []
        with self.lock:
            for core_branch in query.cores:
                for core_name, core in self.core_segments.items():
                    if not name_matches(core_branch.select, core_name):
                        continue
                    for provider_branch in core_branch.providers:
                        for provider_name, provider in core.providers.items():
                            if not name_matches(provider_branch.select, provider_name):
                                continue
                            for entity_branch in provider_branch.entities:
                                for entity_name, entity in provider.entities.items():
                                    if not name_matches(entity_branch.select, entity_name):
                                        continue
                                    for snapshot_branch in entity_branch.snapshots:
                                        pairs.append((entity, snapshot_branch))
        return pairs

    @staticmethod
    def _project(
        snapshot: EntitySnapshot, branch: SnapshotBranch
    ) -> EntitySnapshot | None:
        """Apply the branch's instance selection. Snapshots are immutable, so
        the stored object itself is a valid detached result: commits replace
        timeline entries with new objects and never mutate them."""
        if isinstance(branch.instances, InstanceIndex):
            idx = branch.instances.index
            if idx >= len(snapshot.instances):
                return None
            picked = snapshot.instances[idx]
            return replace(snapshot, instances=(replace(picked, index=0),))
        return snapshot
