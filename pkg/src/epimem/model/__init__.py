"""Hierarchical episodic working memory: IDs, commits, queries, associations."""

from .ids import IdError, MemoryID, format_id, format_timestamp, parse_id, parse_timestamp
from .query import (
    AllSnapshots,
    AtTime,
    BeforeOrAt,
    CoreBranch,
    EntityBranch,
    InstanceAll,
    InstanceIndex,
    Latest,
    LatestN,
    NameAll,
    NameExact,
    NameRegex,
    ProviderBranch,
    Query,
    QueryError,
    QueryResult,
    ResultEntity,
    SnapshotBranch,
    TimeRange,
    name_matches,
    select_timestamps,
)
from .records import (
    Commit,
    CommitResult,
    EntityInstance,
    EntitySnapshot,
    EntityUpdate,
    Tier,
    UpdateNotification,
    UpdateStatus,
)
from .store import (
    CoreSegment,
    Entity,
    EntityStats,
    MemoryStore,
    ProviderSegment,
    UnknownCoreSegment,
    UnknownEntity,
    now_us,
)

__all__ = [name for name in dir() if not name.startswith("_")]
