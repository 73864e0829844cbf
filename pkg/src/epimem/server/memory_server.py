"""The memory-server process.

Owns one working memory and its long-term store, serves the wire protocol
(commits, queries, subscriptions, admin), broadcasts update notifications,
registers with the name service, and enforces the working-memory budget by
consolidating cold snapshots.
"""

from __future__ import annotations

import itertools
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from queue import Full, Queue

from ..idf import Bool, Int64, Map, String, parse_schema
from ..ltm import FilterPolicy, LtmStore
from ..model.ids import MemoryID, format_id, parse_id
from ..model.query import AtTime, Query
from ..model.records import EntitySnapshot, UpdateNotification
from ..model.store import MemoryStore, now_us
from ..predict import PredictionError, PredictionRequest, predict
from ..wire import (
    MSG_ADMIN,
    MSG_COMMIT,
    MSG_COMMIT_STATUS,
    MSG_ERROR,
    MSG_MNS_REGISTER,
    MSG_NOTIFY,
    MSG_QUERY,
    MSG_QUERY_RESULT,
    MSG_SUBSCRIBE,
    MSG_UNSUBSCRIBE,
    ConnectionClosed,
    ProtocolError,
    commit_from_payload,
    error_payload,
    notify_to_payload,
    query_from_payload,
    recv_frame,
    result_to_payload,
    send_frame,
    statuses_to_payload,
)
from .config import ServerConfig
from .capacity import CapacityParams, plan_evictions

logger = logging.getLogger(__name__)

_STOP = object()


@dataclass
class Subscription:
    sub_id: int
    prefix: MemoryID
    connection: "_Connection"
    queue: Queue
    dropped: int = 0
    thread: threading.Thread | None = None

    def matches(self, notification: UpdateNotification) -> bool:
        return any(self.prefix.is_prefix_of(mid) for mid in notification.ids)


class _Connection:
    ids = itertools.count(1)

    def __init__(self, sock: socket.socket, server: "MemoryServer"):
        self.sock = sock
        self.server = server
        self.write_lock = threading.Lock()
        self.conn_id = next(self.ids)
        self.subscriptions: dict[int, Subscription] = {}

    def send(self, msg_type: int, payload: Map) -> None:
        with self.write_lock:
            send_frame(self.sock, msg_type, payload)


class _LtmHistory:
    """HistorySource adapter over the long-term store."""

    def __init__(self, ltm: LtmStore):
        self.ltm = ltm

    def timestamps(self, entity_id: MemoryID) -> list[int]:
        return self.ltm.entity_timestamps(entity_id)

    def fetch(self, entity_id: MemoryID, timestamp: int) -> EntitySnapshot:
        return self.ltm.recall(entity_id.with_snapshot(timestamp))


class MemoryServer:
    def __init__(self, config: ServerConfig):
        self.config = config
        self.store = MemoryStore(config.memory_name, hot_window_us=config.hot_window_us)
        self._schema_types = {}
        for path in config.schema_files:
            with open(path, "r", encoding="utf-8") as f:
                doc = parse_schema(f.read())
            self._schema_types.update(doc.types)
        for name, type_name in config.core_segments:
            core_type = None
            if type_name is not None:
                if type_name not in self._schema_types:
                    raise ValueError(f"core segment {name!r} references unknown type {type_name!r}")
                core_type = self._schema_types[type_name]
            self.store.declare_core_segment(name, core_type)
        policy = None
        if config.ltm_max_hz is not None or config.ltm_similarity_epsilon > 0:
            policy = FilterPolicy(
                max_hz=config.ltm_max_hz or float("inf"),
                similarity_epsilon=config.ltm_similarity_epsilon,
            )
        self.ltm = LtmStore(config.ltm_root, config.memory_name, policy=policy)
        self._history = _LtmHistory(self.ltm)
        self.ltm_alarms = 0
        self.consolidated_total = 0
        self._listener: socket.socket | None = None
        self.endpoint: tuple[str, int] | None = None
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        self._connections: set[_Connection] = set()
        self._conn_lock = threading.Lock()
        self._sub_seq = itertools.count(1)

    # --- lifecycle -------------------------------------------------------------

    def start(self) -> "MemoryServer":
        self._listener = socket.create_server((self.config.host, self.config.port))
        self.endpoint = self._listener.getsockname()[:2]
        self._spawn(self._accept_loop, "accept")
        if self.config.mns is not None:
            self._spawn(self._heartbeat_loop, "mns-heartbeat")
        if self.config.capacity_check_seconds > 0:
            self._spawn(self._capacity_loop, "capacity")
        logger.info("memory %s listening on %s:%d", self.config.memory_name, *self.endpoint)
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._conn_lock:
            connections = list(self._connections)
        for conn in connections:
            self._drop_connection(conn)
        self.ltm.close()

    def _spawn(self, target, name: str) -> None:
        thread = threading.Thread(target=target, name=f"{self.config.memory_name}-{name}", daemon=True)
        thread.start()
        self._threads.append(thread)

    def _heartbeat_loop(self) -> None:
        host, port = self.config.mns
        while not self._stopping.is_set():
            try:
                with socket.create_connection((host, port), timeout=2.0) as sock:
                    send_frame(
                        sock,
                        MSG_MNS_REGISTER,
                        Map(
                            {
                                "name": String(self.config.memory_name),
                                "host": String(self.endpoint[0]),
                                "port": Int64(self.endpoint[1]),
                            }
                        ),
                    )
                    recv_frame(sock)
            except OSError:
                logger.warning("mns heartbeat to %s:%d failed", host, port)
            self._stopping.wait(self.config.heartbeat_seconds)

    def _capacity_loop(self) -> None:
        while not self._stopping.wait(self.config.capacity_check_seconds):
            try:
                self.enforce_capacity()
            except Exception:
                logger.exception("periodic capacity enforcement failed")

    # --- connections -----------------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(sock, self)
            with self._conn_lock:
                self._connections.add(conn)
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            ).start()

    def _drop_connection(self, conn: _Connection) -> None:
        for sub in list(conn.subscriptions.values()):
            self._remove_subscription(sub)
        with self._conn_lock:
            self._connections.discard(conn)
        try:
            conn.sock.close()
        except OSError:
            pass

    def _serve_connection(self, conn: _Connection) -> None:
        try:
            while not self._stopping.is_set():
                try:
                    msg_type, payload = recv_frame(conn.sock)
                except (ConnectionClosed, ProtocolError, OSError):
                    return
                try:
                    self._dispatch(conn, msg_type, payload)
                except Exception as exc:
                    logger.exception("request failed")
                    try:
                        conn.send(MSG_ERROR, error_payload("internal", str(exc)))
                    except OSError:
                        return
        finally:
            self._drop_connection(conn)

    def _dispatch(self, conn: _Connection, msg_type: int, payload: Map) -> None:
        if msg_type == MSG_COMMIT:
            self._handle_commit(conn, payload)
        elif msg_type == MSG_QUERY:
            self._handle_query(conn, payload)
        elif msg_type == MSG_SUBSCRIBE:
            self._handle_subscribe(conn, payload)
        elif msg_type == MSG_UNSUBSCRIBE:
            self._handle_unsubscribe(conn, payload)
        elif msg_type == MSG_ADMIN:
            self._handle_admin(conn, payload)
        else:
            conn.send(MSG_ERROR, error_payload("bad-message", f"unsupported type {msg_type}"))

    # --- commit ----------------------------------------------------------------

    def _handle_commit(self, conn: _Connection, payload: Map) -> None:
        try:
            commit = commit_from_payload(payload)
        except Exception as exc:
            conn.send(MSG_ERROR, error_payload("bad-commit", str(exc)))
            return
        with self.store.lock:
            t0 = time.perf_counter_ns()
            result = self.store.apply_commit(commit)
            storage_us = (time.perf_counter_ns() - t0) // 1_000
            if result.notification.ids:
                self._broadcast(result.notification)
        conn.send(
            MSG_COMMIT_STATUS,
            statuses_to_payload(result.statuses, result.notification.seq, storage_us),
        )
        self.enforce_capacity()

    def _broadcast(self, notification: UpdateNotification) -> None:
        with self._conn_lock:
            connections = list(self._connections)
        for other in connections:
            for sub in list(other.subscriptions.values()):
                if not sub.matches(notification):
                    continue
                try:
                    sub.queue.put_nowait(notification)
                except Full:
                    sub.dropped += 1

    # --- query -----------------------------------------------------------------

    def _handle_query(self, conn: _Connection, payload: Map) -> None:
        try:
            query = query_from_payload(payload)
        except Exception as exc:
            conn.send(MSG_ERROR, error_payload("bad-query", str(exc)))
            return
        try:
            t0 = time.perf_counter_ns()
            result = self.store.resolve_query(query, history=self._history)
            result.lookup_us = (time.perf_counter_ns() - t0) // 1_000
            self._attach_predictions(query, result)
        except Exception as exc:
            conn.send(MSG_ERROR, error_payload("query-failed", str(exc)))
            return
        conn.send(MSG_QUERY_RESULT, result_to_payload(result))

    def _attach_predictions(self, query: Query, result) -> None:
        """Future AtTime selectors resolve through the prediction paths."""
        for entity, branch in self.store.matching_entities(query):
            if not isinstance(branch.select, AtTime):
                continue
            latest = entity.latest_timestamp
            if latest is None or branch.select.t <= latest:
                continue
            request = PredictionRequest(entity.entity_id, branch.select.t)
            try:
                prediction = predict(
                    self.store, request, ltm=self.ltm, k_basis=self.config.k_basis
                )
            except PredictionError as exc:
                result.entity_status[format_id(entity.entity_id)] = f"{exc.code}: {exc}"
                continue
            result.add_snapshot(
                entity.entity_id, prediction.as_snapshot(branch.select.t)
            )
        result.ids = sorted(set(result.ids), key=lambda m: m.components)

    # --- subscriptions ----------------------------------------------------------

    def _handle_subscribe(self, conn: _Connection, payload: Map) -> None:
        try:
            prefix = parse_id(payload.entries["prefix"].value)
        except (KeyError, ValueError) as exc:
            conn.send(MSG_ERROR, error_payload("bad-prefix", str(exc)))
            return
        sub = Subscription(
            sub_id=next(self._sub_seq),
            prefix=prefix,
            connection=conn,
            queue=Queue(maxsize=self.config.subscription_queue),
        )
        sub.thread = threading.Thread(
            target=self._notify_loop, args=(sub,), daemon=True,
            name=f"notify-{sub.sub_id}",
        )
        conn.subscriptions[sub.sub_id] = sub
        sub.thread.start()
        conn.send(MSG_SUBSCRIBE, Map({"sub": Int64(sub.sub_id)}))

    def _handle_unsubscribe(self, conn: _Connection, payload: Map) -> None:
        sub_id = payload.entries.get("sub")
        sub = conn.subscriptions.get(sub_id.value if sub_id else -1)
        if sub is None:
            conn.send(MSG_UNSUBSCRIBE, Map({"ok": Bool(False)}))
            return
        self._remove_subscription(sub)
        conn.send(MSG_UNSUBSCRIBE, Map({"ok": Bool(True)}))

    def _remove_subscription(self, sub: Subscription) -> None:
        sub.connection.subscriptions.pop(sub.sub_id, None)
        sub.queue.put(_STOP)

    def _notify_loop(self, sub: Subscription) -> None:
        while True:
            item = sub.queue.get()
            if item is _STOP:
                return
            try:
                sub.connection.send(MSG_NOTIFY, notify_to_payload(item, sub.sub_id))
            except OSError:
                return

    # --- capacity ----------------------------------------------------------------

    def capacity_params(self) -> CapacityParams:
        return CapacityParams(
            wm_max_bytes=self.config.wm_max_bytes,
            wm_max_snapshots_per_entity=self.config.wm_max_snapshots_per_entity,
            hot_query_threshold=self.config.hot_query_threshold,
            hot_window_us=self.config.hot_window_us,
        )

    def enforce_capacity(self, now: int | None = None) -> int:
        """Consolidate cold snapshots to the long-term store until the budget
        holds; returns the number of snapshots moved."""
        now = now_us() if now is None else now
        moved = 0
        with self.store.lock:
            plan = plan_evictions(self.store, self.capacity_params(), now)
            for entity, ts in plan:
                if self._consolidate_one(entity, ts):
                    moved += 1
        self.consolidated_total += moved
        return moved

    def _consolidate_one(self, entity, ts: int) -> bool:
        snapshot = entity.timeline[ts]
        snapshot_id = entity.snapshot_id(ts)
        links = tuple((s, t) for s, t in entity.links if s == snapshot_id)
        annotation = self._annotation_for(entity.entity_id)
        try:
            self.ltm.consolidate(snapshot_id, snapshot, links=links, annotation=annotation)
        except Exception:
            logger.exception("consolidation of %s failed", format_id(snapshot_id))
            self.ltm_alarms += 1
            return False
        self.store.evict_snapshot(entity, ts)
        return True

    def _annotation_for(self, entity_id: MemoryID):
        core = self.store.core_segments.get(entity_id.core_segment)
        if core is None:
            return None
        provider = core.providers.get(entity_id.provider_segment)
        if provider is not None and provider.extension_type is not None:
            return provider.extension_type
        return core.core_type

    def force_consolidate(self) -> int:
        """Move every non-latest snapshot to the long-term store."""
        moved = 0
        with self.store.lock:
            for entity in self.store.entities():
                for ts in list(entity.order[:-1]):
                    if self._consolidate_one(entity, ts):
                        moved += 1
        self.consolidated_total += moved
        self.ltm.flush_index()
        return moved

    # --- admin -------------------------------------------------------------------

    def _handle_admin(self, conn: _Connection, payload: Map) -> None:
        command = payload.entries.get("command")
        command = command.value if command is not None else ""
        reply: dict = {"ok": Bool(True)}
        try:
            if command == "resize":
                self.config.wm_max_bytes = payload.entries["wm_max_bytes"].value
                if self.config.wm_max_bytes <= 0:
                    raise ValueError("wm_max_bytes must be > 0")
                moved = self.enforce_capacity()
                reply["moved"] = Int64(moved)
                reply["wm_max_bytes"] = Int64(self.config.wm_max_bytes)
            elif command == "stats":
                with self.store.lock:
                    reply.update(
                        {
                            "memory": String(self.config.memory_name),
                            "wm_bytes": Int64(self.store.wm_bytes),
                            "wm_max_bytes": Int64(self.config.wm_max_bytes),
                            "snapshots": Int64(self.store.snapshot_count()),
                            "entities": Int64(len(self.store.entities())),
                            "seq": Int64(self.store.seq),
                            "ltm_alarms": Int64(self.ltm_alarms),
                            "consolidated": Int64(self.consolidated_total),
                            "ltm_records": Int64(len(self.ltm.list_ids())),
                            "dropped_notifications": Int64(self._dropped_total()),
                        }
                    )
            elif command == "consolidate":
                everything = payload.entries.get("all")
                if everything is not None and everything.value:
                    reply["moved"] = Int64(self.force_consolidate())
                else:
                    reply["moved"] = Int64(self.enforce_capacity())
            elif command == "encode":
                prefix = payload.entries.get("prefix")
                prefix_id = parse_id(prefix.value) if prefix is not None else None
                reply["encoded"] = Int64(self.ltm.encode_all(prefix=prefix_id))
            elif command == "forget":
                prefix = payload.entries.get("prefix")
                begin = payload.entries.get("begin")
                end = payload.entries.get("end")
                provider = payload.entries.get("provider")
                reply["removed"] = Int64(
                    self.ltm.forget(
                        prefix=parse_id(prefix.value) if prefix is not None else None,
                        begin=begin.micros if begin is not None else None,
                        end=end.micros if end is not None else None,
                        provider=provider.value if provider is not None else None,
                    )
                )
            elif command == "link":
                self.store.link(
                    parse_id(payload.entries["from"].value),
                    parse_id(payload.entries["to"].value),
                )
            elif command == "tree":
                prefix = payload.entries.get("prefix")
                prefix_id = parse_id(prefix.value) if prefix is not None else None
                reply["tree"] = self._tree(prefix_id)
            else:
                conn.send(MSG_ERROR, error_payload("bad-admin", f"unknown command {command!r}"))
                return
        except Exception as exc:
            conn.send(MSG_ERROR, error_payload("admin-failed", str(exc)))
            return
        conn.send(MSG_ADMIN, Map(reply))

    def _tree(self, prefix: MemoryID | None) -> Map:
        """Hierarchy listing: core segments, providers, entities with snapshot
        counts (working memory plus consolidated history)."""
        with self.store.lock:
            cores: dict[str, Map] = {}
            for core_name, core in sorted(self.store.core_segments.items()):
                if prefix is not None and prefix.core_segment not in (None, core_name):
                    continue
                providers: dict[str, Map] = {}
                for provider_name, provider in sorted(core.providers.items()):
                    if prefix is not None and prefix.provider_segment not in (
                        None,
                        provider_name,
                    ):
                        continue
                    entities: dict[str, Map] = {}
                    for entity_name, entity in sorted(provider.entities.items()):
                        if prefix is not None and prefix.entity_name not in (
                            None,
                            entity_name,
                        ):
                            continue
                        ltm_count = len(self.ltm.entity_timestamps(entity.entity_id))
                        entities[entity_name] = Map(
                            {
                                "wm_snapshots": Int64(len(entity.order)),
                                "ltm_snapshots": Int64(ltm_count),
                                "links": Int64(len(entity.links)),
                            }
                        )
                    providers[provider_name] = Map(entities)
                cores[core_name] = Map(providers)
            return Map(cores)

    def _dropped_total(self) -> int:
        with self._conn_lock:
            return sum(
                sub.dropped
                for conn in self._connections
                for sub in conn.subscriptions.values()
            )
