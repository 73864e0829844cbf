"""Client SDK.

Connects through the name service, keeps one serialized connection per memory
server, and exposes commit/query/subscribe plus the event-driven pipeline
stage helper: on every update notification matching an input prefix, query
the notified snapshots, transform them, and commit the result to another
memory with association links back to the inputs.
"""

from __future__ import annotations

import itertools
import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Callable, Sequence

from .idf import Bool, Int64, Map, String, Time
from .model.ids import MemoryID, format_id, parse_id
from .model.query import Query, QueryResult
from .model.records import Commit, EntityUpdate, UpdateNotification, UpdateStatus
from .wire import (
    MSG_ADMIN,
    MSG_COMMIT,
    MSG_ERROR,
    MSG_MNS_RESOLVE,
    MSG_NOTIFY,
    MSG_QUERY,
    MSG_SUBSCRIBE,
    MSG_UNSUBSCRIBE,
    ConnectionClosed,
    ProtocolError,
    commit_to_payload,
    notify_from_payload,
    query_to_payload,
    recv_frame,
    result_from_payload,
    send_frame,
    statuses_from_payload,
)

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


class ClientError(Exception):
    pass


class NotFoundError(ClientError):
    pass


class TransportError(ClientError):
    pass


class ServerError(ClientError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class ReconnectPolicy:
    max_retries: int = 5
    base_delay: float = 0.1
    max_delay: float = 5.0

    def delay(self, attempt: int) -> float:
        return min(self.max_delay, self.base_delay * (2**attempt))


@dataclass
class CommitReply:
    statuses: list[UpdateStatus]
    seq: int
    storage_us: int

    def raise_on_error(self) -> "CommitReply":
        failed = [s for s in self.statuses if not s.ok]
        if failed:
            raise ClientError(f"{len(failed)} update(s) failed: {failed[0].code}")
        return self


class ClientSubscription:
    """Dispatches NOTIFY frames to a handler, one at a time; handler errors
    are logged and never terminate the subscription."""

    def __init__(self, handle: "ServerHandle", sub_id: int, prefix: MemoryID, handler):
        self.handle = handle
        self.sub_id = sub_id
        self.prefix = prefix
        self.handler = handler
        self.queue: Queue = Queue()
        self.handler_errors = 0
        self.delivered = 0
        self._stop = object()
        self._thread = threading.Thread(
            target=self._dispatch_loop, daemon=True, name=f"sub-dispatch-{sub_id}"
        )
        self._thread.start()

    def _dispatch_loop(self) -> None:
        while True:
            item = self.queue.get()
            if item is self._stop:
                return
            self.delivered += 1
            try:
                self.handler(item)
            except Exception:
                self.handler_errors += 1
                logger.exception("subscription handler failed")

    def unsubscribe(self) -> None:
        self.handle.unsubscribe(self)

    def _shutdown(self) -> None:
        self.queue.put(self._stop)


class ServerHandle:
    """One serialized wire connection to a memory server."""

    def __init__(self, memory_name: str, endpoint: tuple[str, int],
                 timeout: float = DEFAULT_TIMEOUT):
        self.memory_name = memory_name
        self.endpoint = endpoint
        self.timeout = timeout
        self.sock = socket.create_connection(endpoint)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._send_lock = threading.Lock()
        self._pending: deque[Queue] = deque()
        self._pending_lock = threading.Lock()
        self._subscriptions: dict[int, ClientSubscription] = {}
        self._closed = False
        self._reader = threading.Thread(
            target=self._read_loop, daemon=True, name=f"client-read-{memory_name}"
        )
        self._reader.start()

    # --- plumbing -------------------------------------------------------------

    def _read_loop(self) -> None:
        try:
            while True:
                msg_type, payload = recv_frame(self.sock)
                if msg_type == MSG_NOTIFY:
                    notification, sub_id = notify_from_payload(payload)
                    sub = self._subscriptions.get(sub_id)
                    if sub is not None:
                        sub.queue.put(notification)
                    continue
                with self._pending_lock:
                    slot = self._pending.popleft() if self._pending else None
                if slot is not None:
                    slot.put((msg_type, payload))
        except (ConnectionClosed, ProtocolError, OSError) as exc:
            self._fail_pending(exc)

    def _fail_pending(self, exc: Exception) -> None:
        self._closed = True
        with self._pending_lock:
            pending = list(self._pending)
            self._pending.clear()
        for slot in pending:
            slot.put(exc)
        for sub in list(self._subscriptions.values()):
            sub._shutdown()
        self._subscriptions.clear()

    def _request(self, msg_type: int, payload: Map) -> tuple[int, Map]:
        if self._closed:
            raise TransportError(f"connection to {self.memory_name} is closed")
        slot: Queue = Queue(maxsize=1)
        with self._send_lock:
            with self._pending_lock:
                self._pending.append(slot)
            try:
                send_frame(self.sock, msg_type, payload)
            except OSError as exc:
                self._fail_pending(exc)
                raise TransportError(str(exc)) from exc
        try:
            reply = slot.get(timeout=self.timeout)
        except Empty:
            raise TransportError(f"request to {self.memory_name} timed out") from None
        if isinstance(reply, Exception):
            raise TransportError(str(reply)) from reply
        reply_type, reply_payload = reply
        if reply_type == MSG_ERROR:
            raise ServerError(
                reply_payload.entries["code"].value,
                reply_payload.entries["message"].value,
            )
        return reply_type, reply_payload

    def close(self) -> None:
        self._closed = True
        try:
            self.sock.close()
        except OSError:
            pass

    # --- verbs ------------------------------------------------------------------

    def commit(self, updates: Sequence[EntityUpdate] | Commit) -> CommitReply:
        commit = updates if isinstance(updates, Commit) else Commit(tuple(updates))
        _, payload = self._request(MSG_COMMIT, commit_to_payload(commit))
        statuses, seq, storage_us = statuses_from_payload(payload)
        return CommitReply(statuses, seq, storage_us)

    def query(self, query: Query) -> QueryResult:
        _, payload = self._request(MSG_QUERY, query_to_payload(query))
        return result_from_payload(payload)

    def subscribe(self, prefix: str | MemoryID, handler) -> ClientSubscription:
        prefix_id = parse_id(prefix) if isinstance(prefix, str) else prefix
        _, payload = self._request(
            MSG_SUBSCRIBE, Map({"prefix": String(format_id(prefix_id))})
        )
        sub_id = payload.entries["sub"].value
        sub = ClientSubscription(self, sub_id, prefix_id, handler)
        self._subscriptions[sub_id] = sub
        return sub

    def unsubscribe(self, sub: ClientSubscription) -> None:
        self._subscriptions.pop(sub.sub_id, None)
        sub._shutdown()
        if not self._closed:
            self._request(MSG_UNSUBSCRIBE, Map({"sub": Int64(sub.sub_id)}))

    def admin(self, command: str, **args) -> Map:
        payload: dict = {"command": String(command)}
        for key, value in args.items():
            if isinstance(value, bool):
                payload[key] = Bool(value)
            elif isinstance(value, int):
                payload[key] = Int64(value)
            elif isinstance(value, str):
                payload[key] = String(value)
            else:
                payload[key] = value
        _, reply = self._request(MSG_ADMIN, Map(payload))
        return reply


class MemoryClient:
    """Resolves memories by name and caches one handle per memory server."""

    def __init__(
        self,
        mns: tuple[str, int] | str,
        reconnect: ReconnectPolicy = ReconnectPolicy(),
        timeout: float = DEFAULT_TIMEOUT,
    ):
        if isinstance(mns, str):
            host, _, port = mns.rpartition(":")
            mns = (host, int(port))
        self.mns = mns
        self.reconnect = reconnect
        self.timeout = timeout
        self._handles: dict[str, ServerHandle] = {}
        self._lock = threading.Lock()
        self.cache_hits = 0
        self._closed = False

    def resolve(self, id_text: str) -> tuple[str, int]:
        last_error: Exception | None = None
        for attempt in range(self.reconnect.max_retries + 1):
            try:
                with socket.create_connection(self.mns, timeout=self.timeout) as sock:
                    send_frame(sock, MSG_MNS_RESOLVE, Map({"id": String(id_text)}))
                    msg_type, payload = recv_frame(sock)
                if msg_type == MSG_ERROR:
                    raise ClientError(payload.entries["message"].value)
                if not payload.entries["found"].value:
                    raise NotFoundError(f"memory of {id_text!r} is not registered")
                return payload.entries["host"].value, payload.entries["port"].value
            except (OSError, ConnectionClosed, ProtocolError) as exc:
                last_error = exc
                time.sleep(self.reconnect.delay(attempt))
        raise TransportError(f"name service unreachable: {last_error}")

    def connect(self, id_text: str) -> ServerHandle:
        if self._closed:
            raise ClientError("client is closed")
        memory_name = parse_id(id_text).memory_name
        with self._lock:
            cached = self._handles.get(memory_name)
            if cached is not None and not cached._closed:
                self.cache_hits += 1
                return cached
            endpoint = self.resolve(id_text)
            last_error: Exception | None = None
            for attempt in range(self.reconnect.max_retries + 1):
                try:
                    handle = ServerHandle(memory_name, endpoint, timeout=self.timeout)
                    self._handles[memory_name] = handle
                    return handle
                except OSError as exc:
                    last_error = exc
                    time.sleep(self.reconnect.delay(attempt))
            raise TransportError(f"cannot connect to {memory_name}: {last_error}")

    def close(self) -> None:
        self._closed = True
        with self._lock:
            for handle in self._handles.values():
                handle.close()
            self._handles.clear()


# --- event-driven pipeline stages ------------------------------------------------


@dataclass
class PipelineStage:
    """Fig-style processing stage: notified inputs -> transform -> output commit.

    The transform receives the queried inputs and returns the updates to
    commit (or a full Commit); the stage adds association links from every
    output snapshot back to the exact input snapshot IDs it was computed from.
    """

    input_prefix: str | MemoryID
    transform: Callable[[QueryResult], Sequence[EntityUpdate] | Commit]
    output_target: str | MemoryID
    coalesce: bool = True
    query_latest_instead_of_ids: bool = False


class StageHandle:
    def __init__(self, client: MemoryClient, stage: PipelineStage):
        self.stage = stage
        self.prefix = (
            parse_id(stage.input_prefix)
            if isinstance(stage.input_prefix, str)
            else stage.input_prefix
        )
        target = (
            parse_id(stage.output_target)
            if isinstance(stage.output_target, str)
            else stage.output_target
        )
        self.input_handle = client.connect(format_id(self.prefix))
        self.output_handle = client.connect(format_id(target))
        self.errors = 0
        self.processed = 0
        self.outputs = 0
        self._busy = False
        self._queue: Queue = Queue()
        self._stop = object()
        self._worker = threading.Thread(target=self._run, daemon=True, name="stage-worker")
        self._worker.start()
        self._subscription = self.input_handle.subscribe(self.prefix, self._queue.put)

    def stop(self) -> None:
        try:
            self._subscription.unsubscribe()
        except ClientError:
            pass
        self._queue.put(self._stop)
        self._worker.join(timeout=5)

    def drain(self, timeout: float = 5.0) -> None:
        """Wait until every received notification has been processed."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self._queue.empty() and not self._busy:
                return
            time.sleep(0.005)

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is self._stop:
                return
            if self.stage.coalesce:
                while True:
                    try:
                        nxt = self._queue.get_nowait()
                    except Empty:
                        break
                    if nxt is self._stop:
                        return
                    item = nxt
            self._busy = True
            try:
                self._process(item)
            except Exception:
                self.errors += 1
                logger.exception("pipeline stage failed")
            finally:
                self._busy = False

    def _process(self, notification: UpdateNotification) -> None:
        input_ids = [mid for mid in notification.ids if self.prefix.is_prefix_of(mid)]
        if not input_ids:
            return
        self.processed += 1
        if self.stage.query_latest_instead_of_ids:
            from .model.query import Latest

            query = Query.for_prefix(self.prefix, snapshot=Latest())
        else:
            query = Query.for_ids(input_ids)
        result = self.input_handle.query(query)
        if result.is_empty():
            return
        produced = self.stage.transform(result)
        updates = produced.updates if isinstance(produced, Commit) else tuple(produced)
        if not updates:
            return
        linked = tuple(
            EntityUpdate(
                entity_id=u.entity_id,
                timestamp=u.timestamp,
                instances=u.instances,
                produced_at=u.produced_at,
                links=tuple(u.links) + tuple(result.ids),
            )
            for u in updates
        )
        self.output_handle.commit(Commit(linked)).raise_on_error()
        self.outputs += 1


def run_stage(client: MemoryClient, stage: PipelineStage) -> StageHandle:
    return StageHandle(client, stage)
