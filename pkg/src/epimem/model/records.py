"""Wire-level verbs and stored units of the commit/notify/query cycle."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from ..idf import DataObject, Map
from .ids import MemoryID


class Tier(str, enum.Enum):
    WM = "wm"
    LTM_ONLINE = "ltm-online"
    LTM_LATENT = "ltm-latent"


@dataclass(frozen=True)
class EntityInstance:
    index: int
    data: DataObject
    metadata: Map = field(default_factory=Map)


@dataclass(frozen=True)
class EntitySnapshot:
    timestamp: int
    instances: tuple[EntityInstance, ...]
    tier: Tier = Tier.WM
    synthetic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        for i, inst in enumerate(self.instances):
            if inst.index != i:
                raise ValueError(f"instance index {inst.index} at position {i}")

    def copy(self) -> "EntitySnapshot":
        return replace(self)


@dataclass(frozen=True)
class EntityUpdate:
    entity_id: MemoryID
    timestamp: int
    instances: tuple[DataObject, ...]
    produced_at: int | None = None
    links: tuple[MemoryID, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "links", tuple(self.links))
        if self.entity_id.level != 4:
            raise ValueError(
                f"entity id must have exactly 4 components, got {self.entity_id}"
            )


@dataclass(frozen=True)
class Commit:
    updates: tuple[EntityUpdate, ...]

    def __post_init__(self):
        object.__setattr__(self, "updates", tuple(self.updates))


@dataclass(frozen=True)
class UpdateStatus:
    ok: bool
    snapshot_id: MemoryID | None = None
    code: str | None = None
    message: str | None = None
    uninitialized: tuple[str, ...] = ()


@dataclass(frozen=True)
class UpdateNotification:
    ids: tuple[MemoryID, ...]
    seq: int


@dataclass(frozen=True)
class CommitResult:
    statuses: tuple[UpdateStatus, ...]
    notification: UpdateNotification
