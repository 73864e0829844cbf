"""Tree-structured queries mirroring the memory hierarchy.

Each name-keyed level (core segment, provider segment, entity) takes a name
selector, the snapshot level takes a timestamp selector, and the instance
level an index selector. A level may hold several branches; branch results
are unioned at the snapshot-ID level.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

from .ids import MemoryID
from .records import EntitySnapshot


class QueryError(ValueError):
    pass


# --- name selectors ---------------------------------------------------------


@dataclass(frozen=True)
class NameAll:
    pass


@dataclass(frozen=True)
class NameExact:
    name: str


@dataclass(frozen=True)
class NameRegex:
    pattern: str


NameSelector = Union[NameAll, NameExact, NameRegex]


def name_matches(selector: NameSelector, name: str) -> bool:
    if isinstance(selector, NameAll):
        return True
    if isinstance(selector, NameExact):
        return selector.name == name
    try:
        compiled = re.compile(selector.pattern)
    except re.error as exc:
        raise QueryError(f"malformed regex {selector.pattern!r}: {exc}") from None
    return compiled.fullmatch(name) is not None


# --- snapshot selectors -----------------------------------------------------


@dataclass(frozen=True)
class Latest:
    pass


@dataclass(frozen=True)
class LatestN:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise QueryError(f"LatestN requires n >= 1, got {self.n}")


@dataclass(frozen=True)
class AtTime:
    t: int


@dataclass(frozen=True)
class BeforeOrAt:
    t: int


@dataclass(frozen=True)
class TimeRange:
    begin: int
    end: int

    def __post_init__(self):
        if self.begin > self.end:
            raise QueryError(f"empty time range [{self.begin}, {self.end}]")


@dataclass(frozen=True)
class AllSnapshots:
    pass


SnapshotSelector = Union[Latest, LatestN, AtTime, BeforeOrAt, TimeRange, AllSnapshots]


def select_timestamps(selector: SnapshotSelector, ordered: Sequence[int]) -> list[int]:
    """Apply a snapshot selector to an ascending timestamp sequence."""
    if not ordered:
        return []
    if isinstance(selector, Latest):
        return [ordered[-1]]
    if isinstance(selector, LatestN):
        return list(ordered[-selector.n :])
    if isinstance(selector, AtTime):
        return [selector.t] if _contains(ordered, selector.t) else []
    if isinstance(selector, BeforeOrAt):
        idx = bisect.bisect_right(ordered, selector.t)
        return [ordered[idx - 1]] if idx > 0 else []
    if isinstance(selector, TimeRange):
        lo = bisect.bisect_left(ordered, selector.begin)
        hi = bisect.bisect_right(ordered, selector.end)
        return list(ordered[lo:hi])
    if isinstance(selector, AllSnapshots):
        return list(ordered)
    raise TypeError(f"not a snapshot selector: {type(selector).__name__}")


def _contains(ordered: Sequence[int], t: int) -> bool:
    idx = bisect.bisect_left(ordered, t)
    return idx < len(ordered) and ordered[idx] == t


# --- instance selectors -----------------------------------------------------


@dataclass(frozen=True)
class InstanceAll:
    pass


@dataclass(frozen=True)
class InstanceIndex:
    index: int


InstanceSelector = Union[InstanceAll, InstanceIndex]


# --- the query tree ---------------------------------------------------------


@dataclass
class SnapshotBranch:
    select: SnapshotSelector
    instances: InstanceSelector = field(default_factory=InstanceAll)


@dataclass
class EntityBranch:
    select: NameSelector
    snapshots: list[SnapshotBranch]


@dataclass
class ProviderBranch:
    select: NameSelector
    entities: list[EntityBranch]


@dataclass
class CoreBranch:
    select: NameSelector
    providers: list[ProviderBranch]


@dataclass
class Query:
    cores: list[CoreBranch]
    include_links: bool = False

    @classmethod
    def single(
        cls,
        snapshot: SnapshotSelector,
        core: NameSelector | str | None = None,
        provider: NameSelector | str | None = None,
        entity: NameSelector | str | None = None,
        instances: InstanceSelector | None = None,
        include_links: bool = False,
    ) -> "Query":
        """One branch per level; strings mean exact names, None means all."""

        def sel(x) -> NameSelector:
            if x is None:
                return NameAll()
            if isinstance(x, str):
                return NameExact(x)
            return x

        return cls(
            cores=[
                CoreBranch(
                    sel(core),
                    [
                        ProviderBranch(
                            sel(provider),
                            [
                                EntityBranch(
                                    sel(entity),
                                    [
                                        SnapshotBranch(
                                            snapshot, instances or InstanceAll()
                                        )
                                    ],
                                )
                            ],
                        )
                    ],
                )
            ],
            include_links=include_links,
        )

    @classmethod
    def for_prefix(
        cls,
        prefix: MemoryID,
        snapshot: SnapshotSelector | None = None,
        include_links: bool = False,
    ) -> "Query":
        """Select everything under an ID prefix; snapshot defaults by depth."""
        if snapshot is None:
            snapshot = AtTime(prefix.timestamp) if prefix.timestamp is not None else Latest()
        instances: InstanceSelector = (
            InstanceIndex(prefix.instance_index)
            if prefix.instance_index is not None
            else InstanceAll()
        )
        return cls.single(
            snapshot,
            core=prefix.core_segment,
            provider=prefix.provider_segment,
            entity=prefix.entity_name,
            instances=instances,
            include_links=include_links,
        )

    @classmethod
    def for_ids(cls, ids: Sequence[MemoryID], include_links: bool = False) -> "Query":
        """Exact-match branches for a set of snapshot-level IDs."""
        cores: list[CoreBranch] = []
        for mid in ids:
            if mid.timestamp is None:
                raise QueryError(f"{mid} is not a snapshot-level ID")
            cores.append(
                CoreBranch(
                    NameExact(mid.core_segment),
                    [
                        ProviderBranch(
                            NameExact(mid.provider_segment),
                            [
                                EntityBranch(
                                    NameExact(mid.entity_name),
                                    [SnapshotBranch(AtTime(mid.timestamp))],
                                )
                            ],
                        )
                    ],
                )
            )
        return cls(cores=cores, include_links=include_links)


# --- results ----------------------------------------------------------------


@dataclass
class ResultEntity:
    entity_id: MemoryID
    snapshots: dict[int, EntitySnapshot] = field(default_factory=dict)
    links: tuple[tuple[MemoryID, MemoryID], ...] = ()


@dataclass
class QueryResult:
    """A detached sub-memory: copies of matched snapshots plus their IDs."""

    memory_name: str
    cores: dict[str, dict[str, dict[str, ResultEntity]]] = field(default_factory=dict)
    ids: list[MemoryID] = field(default_factory=list)
    entity_status: dict[str, str] = field(default_factory=dict)
    lookup_us: int = 0

    def entity(self, entity_id: MemoryID) -> ResultEntity:
        node = self.cores.setdefault(entity_id.core_segment, {})
        node = node.setdefault(entity_id.provider_segment, {})
        found = node.get(entity_id.entity_name)
        if found is None:
            found = node[entity_id.entity_name] = ResultEntity(entity_id.entity_id)
        return found

    def add_snapshot(self, entity_id: MemoryID, snapshot: EntitySnapshot) -> None:
        entry = self.entity(entity_id)
        if snapshot.timestamp not in entry.snapshots:
            self.ids.append(entity_id.with_snapshot(snapshot.timestamp))
        entry.snapshots[snapshot.timestamp] = snapshot

    def snapshots(self) -> Iterator[tuple[MemoryID, EntitySnapshot]]:
        for core, providers in sorted(self.cores.items()):
            for provider, entities in sorted(providers.items()):
                for name, entry in sorted(entities.items()):
                    base = MemoryID(self.memory_name, core, provider, name)
                    for ts in sorted(entry.snapshots):
                        yield base.with_snapshot(ts), entry.snapshots[ts]

    def id_set(self) -> frozenset[MemoryID]:
        return frozenset(self.ids)

    def is_empty(self) -> bool:
        return not self.ids

    def single(self) -> EntitySnapshot:
        [(_, snapshot)] = list(self.snapshots())
        return snapshot
