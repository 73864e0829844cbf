"""Payload schemas: conversions between model objects and wire maps."""

from __future__ import annotations

from ..idf import (
    Bool,
    DataObject,
    Int64,
    List,
    Map,
    String,
    Time,
)
from ..model.ids import MemoryID, format_id, parse_id
from ..model.ids import _unchecked as _fast_id
from ..model.query import (
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
    SnapshotBranch,
    TimeRange,
)
from ..model.records import (
    Commit,
    EntityInstance,
    EntitySnapshot,
    EntityUpdate,
    Tier,
    UpdateNotification,
    UpdateStatus,
)


def _get(payload: Map, key: str, ty, default=None):
    value = payload.entries.get(key)
    if value is None:
        return default
    if not isinstance(value, ty):
        raise QueryError(f"payload key {key!r} has type {type(value).__name__}")
    return value


# --- commits -----------------------------------------------------------------


def commit_to_payload(commit: Commit) -> Map:
    updates = []
    for update in commit.updates:
        entry: dict[str, DataObject] = {
            "entity_id": String(format_id(update.entity_id)),
            "timestamp": Time(update.timestamp),
            "instances": List(update.instances),
        }
        if update.produced_at is not None:
            entry["produced_at"] = Time(update.produced_at)
        if update.links:
            entry["links"] = List(tuple(String(format_id(t)) for t in update.links))
        updates.append(Map(entry))
    return Map({"updates": List(tuple(updates))})


def commit_from_payload(payload: Map) -> Commit:
    updates = []
    for entry in _get(payload, "updates", List, List(())).items:
        produced = entry.entries.get("produced_at")
        links = entry.entries.get("links")
        updates.append(
            EntityUpdate(
                entity_id=parse_id(entry.entries["entity_id"].value),
                timestamp=entry.entries["timestamp"].micros,
                instances=tuple(entry.entries["instances"].items),
                produced_at=produced.micros if produced is not None else None,
                links=tuple(parse_id(t.value) for t in links.items) if links else (),
            )
        )
    return Commit(tuple(updates))


def statuses_to_payload(
    statuses: tuple[UpdateStatus, ...], seq: int, storage_us: int
) -> Map:
    rows = []
    for status in statuses:
        row: dict[str, DataObject] = {"ok": Bool(status.ok)}
        if status.snapshot_id is not None:
            row["id"] = String(format_id(status.snapshot_id))
        if status.code:
            row["code"] = String(status.code)
        if status.message:
            row["message"] = String(status.message)
        if status.uninitialized:
            row["uninitialized"] = List(tuple(String(u) for u in status.uninitialized))
        rows.append(Map(row))
    return Map(
        {
            "seq": Int64(seq),
            "storage_us": Int64(storage_us),
            "statuses": List(tuple(rows)),
        }
    )


def statuses_from_payload(payload: Map) -> tuple[list[UpdateStatus], int, int]:
    statuses = []
    for row in _get(payload, "statuses", List, List(())).items:
        sid = row.entries.get("id")
        code = row.entries.get("code")
        message = row.entries.get("message")
        uninit = row.entries.get("uninitialized")
        statuses.append(
            UpdateStatus(
                ok=row.entries["ok"].value,
                snapshot_id=parse_id(sid.value) if sid is not None else None,
                code=code.value if code is not None else None,
                message=message.value if message is not None else None,
                uninitialized=tuple(u.value for u in uninit.items) if uninit else (),
            )
        )
    seq = _get(payload, "seq", Int64, Int64(0)).value
    storage_us = _get(payload, "storage_us", Int64, Int64(0)).value
    return statuses, seq, storage_us


# --- queries -----------------------------------------------------------------


def _name_selector_to_map(selector) -> Map:
    if isinstance(selector, NameAll):
        return Map({"kind": String("all")})
    if isinstance(selector, NameExact):
        return Map({"kind": String("exact"), "name": String(selector.name)})
    if isinstance(selector, NameRegex):
        return Map({"kind": String("regex"), "pattern": String(selector.pattern)})
    raise TypeError(type(selector).__name__)


def _name_selector_from_map(value: Map):
    kind = value.entries["kind"].value
    if kind == "all":
        return NameAll()
    if kind == "exact":
        return NameExact(value.entries["name"].value)
    if kind == "regex":
        return NameRegex(value.entries["pattern"].value)
    raise QueryError(f"unknown name selector kind {kind!r}")


def _snapshot_branch_to_map(branch: SnapshotBranch) -> Map:
    sel = branch.select
    entry: dict[str, DataObject] = {}
    if isinstance(sel, Latest):
        entry["kind"] = String("latest")
    elif isinstance(sel, LatestN):
        entry["kind"] = String("latestN")
        entry["n"] = Int64(sel.n)
    elif isinstance(sel, AtTime):
        entry["kind"] = String("at")
        entry["t"] = Time(sel.t)
    elif isinstance(sel, BeforeOrAt):
        entry["kind"] = String("beforeOrAt")
        entry["t"] = Time(sel.t)
    elif isinstance(sel, TimeRange):
        entry["kind"] = String("range")
        entry["begin"] = Time(sel.begin)
        entry["end"] = Time(sel.end)
    elif isinstance(sel, AllSnapshots):
        entry["kind"] = String("all")
    else:
        raise TypeError(type(sel).__name__)
    if isinstance(branch.instances, InstanceIndex):
        entry["instance"] = Int64(branch.instances.index)
    return Map(entry)


def _snapshot_branch_from_map(value: Map) -> SnapshotBranch:
    kind = value.entries["kind"].value
    if kind == "latest":
        sel = Latest()
    elif kind == "latestN":
        sel = LatestN(value.entries["n"].value)
    elif kind == "at":
        sel = AtTime(value.entries["t"].micros)
    elif kind == "beforeOrAt":
        sel = BeforeOrAt(value.entries["t"].micros)
    elif kind == "range":
        sel = TimeRange(value.entries["begin"].micros, value.entries["end"].micros)
    elif kind == "all":
        sel = AllSnapshots()
    else:
        raise QueryError(f"unknown snapshot selector kind {kind!r}")
    instance = value.entries.get("instance")
    instances = InstanceIndex(instance.value) if instance is not None else InstanceAll()
    return SnapshotBranch(sel, instances)


def query_to_payload(query: Query) -> Map:
    cores = []
    for core in query.cores:
        providers = []
        for provider in core.providers:
            entities = []
            for entity in provider.entities:
                entities.append(
                    Map(
                        {
                            "sel": _name_selector_to_map(entity.select),
                            "snapshots": List(
                                tuple(
                                    _snapshot_branch_to_map(s) for s in entity.snapshots
                                )
                            ),
                        }
                    )
                )
            providers.append(
                Map(
                    {
                        "sel": _name_selector_to_map(provider.select),
                        "entities": List(tuple(entities)),
                    }
                )
            )
        cores.append(
            Map(
                {
                    "sel": _name_selector_to_map(core.select),
                    "providers": List(tuple(providers)),
                }
            )
        )
    return Map(
        {"cores": List(tuple(cores)), "include_links": Bool(query.include_links)}
    )


def query_from_payload(payload: Map) -> Query:
    cores = []
    for core in _get(payload, "cores", List, List(())).items:
        providers = []
        for provider in core.entries["providers"].items:
            entities = []
            for entity in provider.entries["entities"].items:
                entities.append(
                    EntityBranch(
                        _name_selector_from_map(entity.entries["sel"]),
                        [
                            _snapshot_branch_from_map(s)
                            for s in entity.entries["snapshots"].items
                        ],
                    )
                )
            providers.append(
                ProviderBranch(
                    _name_selector_from_map(provider.entries["sel"]), entities
                )
            )
        cores.append(
            CoreBranch(_name_selector_from_map(core.entries["sel"]), providers)
        )
    include = _get(payload, "include_links", Bool, Bool(False)).value
    return Query(cores, include_links=include)


# --- results -----------------------------------------------------------------


def result_to_payload(result: QueryResult) -> Map:
    """Snapshot IDs are implied by tree coordinates and are not re-sent;
    `tier` and `synthetic` are omitted at their defaults (wm, false)."""
    tree: dict[str, DataObject] = {}
    for core, providers in result.cores.items():
        provider_map: dict[str, DataObject] = {}
        for provider, entities in providers.items():
            entity_map: dict[str, DataObject] = {}
            for name, entry in entities.items():
                snapshots = []
                for ts in sorted(entry.snapshots):
                    snapshot = entry.snapshots[ts]
                    row: dict[str, DataObject] = {
                        "t": Time(snapshot.timestamp),
                        "instances": List(
                            tuple(
                                Map({"data": inst.data, "meta": inst.metadata})
                                for inst in snapshot.instances
                            )
                        ),
                    }
                    if snapshot.tier is not Tier.WM:
                        row["tier"] = String(snapshot.tier.value)
                    if snapshot.synthetic:
                        row["synthetic"] = Bool(True)
                    snapshots.append(Map(row))
                node: dict[str, DataObject] = {"snapshots": List(tuple(snapshots))}
                if entry.links:
                    node["links"] = List(
                        tuple(
                            Map(
                                {
                                    "from": String(format_id(s)),
                                    "to": String(format_id(t)),
                                }
                            )
                            for s, t in entry.links
                        )
                    )
                entity_map[name] = Map(node)
            provider_map[provider] = Map(entity_map)
        tree[core] = Map(provider_map)
    return Map(
        {
            "memory": String(result.memory_name),
            "lookup_us": Int64(result.lookup_us),
            "entity_status": Map(
                {k: String(v) for k, v in result.entity_status.items()}
            ),
            "tree": Map(tree),
        }
    )


def result_from_payload(payload: Map) -> QueryResult:
    result = QueryResult(_get(payload, "memory", String, String("")).value)
    result.lookup_us = _get(payload, "lookup_us", Int64, Int64(0)).value
    for key, status in _get(payload, "entity_status", Map, Map()).entries.items():
        result.entity_status[key] = status.value
    ids = []
    for core, providers in _get(payload, "tree", Map, Map()).entries.items():
        for provider, entities in providers.entries.items():
            for name, node in entities.entries.items():
                entity_id = _fast_id(result.memory_name, core, provider, name, None, None)
                entry = result.entity(entity_id)
                for snapshot in node.entries["snapshots"].items:
                    fields = snapshot.entries
                    ts = fields["t"].micros
                    instances = tuple(
                        EntityInstance(
                            i, inst.entries["data"], inst.entries.get("meta", Map())
                        )
                        for i, inst in enumerate(fields["instances"].items)
                    )
                    tier = fields.get("tier")
                    synthetic = fields.get("synthetic")
                    entry.snapshots[ts] = EntitySnapshot(
                        ts,
                        instances,
                        tier=Tier(tier.value) if tier is not None else Tier.WM,
                        synthetic=synthetic.value if synthetic is not None else False,
                    )
                    ids.append(
                        _fast_id(result.memory_name, core, provider, name, ts, None)
                    )
                links = node.entries.get("links")
                if links is not None:
                    entry.links = tuple(
                        (
                            parse_id(link.entries["from"].value),
                            parse_id(link.entries["to"].value),
                        )
                        for link in links.items
                    )
    result.ids = sorted(ids, key=lambda m: m.components)
    return result


# --- notifications, registry, admin ------------------------------------------


def notify_to_payload(notification: UpdateNotification, sub_id: int) -> Map:
    return Map(
        {
            "seq": Int64(notification.seq),
            "ids": List(tuple(String(format_id(m)) for m in notification.ids)),
            "sub": Int64(sub_id),
        }
    )


def notify_from_payload(payload: Map) -> tuple[UpdateNotification, int]:
    ids = tuple(parse_id(s.value) for s in _get(payload, "ids", List, List(())).items)
    seq = _get(payload, "seq", Int64, Int64(0)).value
    sub = _get(payload, "sub", Int64, Int64(0)).value
    return UpdateNotification(ids=ids, seq=seq), sub


def error_payload(code: str, message: str) -> Map:
    return Map({"code": String(code), "message": String(message)})
