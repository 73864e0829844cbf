"""The name registry: memory names -> server endpoints.

Servers re-register as a heartbeat; a record expires after three missed
beats and then resolves as not-found. Re-registration replaces the prior
endpoint. The registry resolves only; it never proxies data.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass

from ..idf import Bool, Int64, Map, String
from ..model.ids import parse_id
from ..wire import (
    MSG_ERROR,
    MSG_MNS_REGISTER,
    MSG_MNS_RESOLVE,
    MSG_MNS_RESULT,
    ConnectionClosed,
    ProtocolError,
    error_payload,
    recv_frame,
    send_frame,
)

logger = logging.getLogger(__name__)

DEFAULT_HEARTBEAT_S = 5.0
MISSED_BEATS = 3


class NameNotFound(KeyError):
    pass


@dataclass
class MnsRecord:
    memory_name: str
    host: str
    port: int
    registered_at: float
    last_heartbeat: float


class MnsRegistry:
    def __init__(self, heartbeat_seconds: float = DEFAULT_HEARTBEAT_S):
        self.expiry_seconds = heartbeat_seconds * MISSED_BEATS
        self.records: dict[str, MnsRecord] = {}
        self.lock = threading.Lock()

    def register(self, name: str, host: str, port: int, at: float | None = None) -> None:
        if not name:
            raise ValueError("memory name must be non-empty")
        at = time.monotonic() if at is None else at
        with self.lock:
            prior = self.records.get(name)
            registered = prior.registered_at if prior else at
            self.records[name] = MnsRecord(name, host, port, registered, at)

    def resolve(self, id_text: str, at: float | None = None) -> tuple[str, int]:
        mid = parse_id(id_text)
        at = time.monotonic() if at is None else at
        with self.lock:
            record = self.records.get(mid.memory_name)
            if record is None:
                raise NameNotFound(mid.memory_name)
            if at - record.last_heartbeat > self.expiry_seconds:
                del self.records[mid.memory_name]
                raise NameNotFound(mid.memory_name)
            return record.host, record.port


class MnsServer:
    """TCP front end for a registry."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 heartbeat_seconds: float = DEFAULT_HEARTBEAT_S):
        self.registry = MnsRegistry(heartbeat_seconds)
        self._listener = socket.create_server((host, port))
        self.endpoint: tuple[str, int] = self._listener.getsockname()[:2]
        self._stopping = threading.Event()
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="mns-accept", daemon=True
        )

    def start(self) -> "MnsServer":
        self._accept_thread.start()
        return self

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            ).start()

    def _serve_connection(self, conn: socket.socket) -> None:
        with conn:
            while not self._stopping.is_set():
                try:
                    msg_type, payload = recv_frame(conn)
                except (ConnectionClosed, ProtocolError, OSError):
                    return
                try:
                    self._dispatch(conn, msg_type, payload)
                except Exception as exc:
                    logger.exception("mns request failed")
                    try:
                        send_frame(conn, MSG_ERROR, error_payload("internal", str(exc)))
                    except OSError:
                        return

    def _dispatch(self, conn: socket.socket, msg_type: int, payload: Map) -> None:
        if msg_type == MSG_MNS_REGISTER:
            try:
                self.registry.register(
                    payload.entries["name"].value,
                    payload.entries["host"].value,
                    payload.entries["port"].value,
                )
                send_frame(conn, MSG_MNS_RESULT, Map({"ok": Bool(True)}))
            except (KeyError, ValueError) as exc:
                send_frame(conn, MSG_ERROR, error_payload("bad-register", str(exc)))
        elif msg_type == MSG_MNS_RESOLVE:
            id_text = payload.entries["id"].value
            try:
                host, port = self.registry.resolve(id_text)
            except NameNotFound as exc:
                send_frame(
                    conn, MSG_MNS_RESULT, Map({"found": Bool(False), "name": String(str(exc))})
                )
                return
            except ValueError as exc:
                send_frame(conn, MSG_ERROR, error_payload("bad-id", str(exc)))
                return
            send_frame(
                conn,
                MSG_MNS_RESULT,
                Map(
                    {
                        "found": Bool(True),
                        "name": String(parse_id(id_text).memory_name),
                        "host": String(host),
                        "port": Int64(port),
                    }
                ),
            )
        else:
            send_frame(
                conn, MSG_ERROR, error_payload("bad-message", f"mns cannot handle type {msg_type}")
            )
