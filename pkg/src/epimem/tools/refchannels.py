"""Reference transports for the data-age comparison.

Both live on the exact same wire layer as the memory protocol: a direct
peer-to-peer channel (one hop) and a minimal publish/subscribe broker (one
producer hop, one forwarding hop). The broker is a single-hop forwarder with
per-topic subscriber lists.
"""

from __future__ import annotations

import socket
import threading
from typing import Callable

from ..idf import Map, String
from ..wire import (
    MSG_COMMIT,
    MSG_SUBSCRIBE,
    ConnectionClosed,
    ProtocolError,
    recv_frame,
    send_frame,
)


class _FrameServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._listener = socket.create_server((host, port))
        self.endpoint: tuple[str, int] = self._listener.getsockname()[:2]
        self._stopping = threading.Event()
        threading.Thread(target=self._accept_loop, daemon=True).start()

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
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(
                target=self._serve, args=(conn,), daemon=True
            ).start()

    def _serve(self, conn: socket.socket) -> None:
        raise NotImplementedError


class P2PReceiver(_FrameServer):
    """Direct channel endpoint; invokes the sink once per received frame."""

    def __init__(self, sink: Callable[[Map], None], host: str = "127.0.0.1", port: int = 0):
        self.sink = sink
        super().__init__(host, port)

    def _serve(self, conn: socket.socket) -> None:
        with conn:
            while not self._stopping.is_set():
                try:
                    _, payload = recv_frame(conn)
                except (ConnectionClosed, ProtocolError, OSError):
                    return
                self.sink(payload)


class FrameSender:
    """Blocking frame writer used by producers on all reference channels."""

    def __init__(self, endpoint: tuple[str, int]):
        self.sock = socket.create_connection(endpoint)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(self, payload: Map, msg_type: int = MSG_COMMIT) -> None:
        send_frame(self.sock, msg_type, payload)

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class PubSubBroker(_FrameServer):
    """Minimal centralized pub/sub: SUBSCRIBE registers a topic, publishes
    are forwarded verbatim to every subscriber of that topic."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.topics: dict[str, list[socket.socket]] = {}
        self.lock = threading.Lock()
        super().__init__(host, port)

    def _serve(self, conn: socket.socket) -> None:
        subscribed: list[tuple[str, socket.socket]] = []
        try:
            while not self._stopping.is_set():
                try:
                    msg_type, payload = recv_frame(conn)
                except (ConnectionClosed, ProtocolError, OSError):
                    return
                if msg_type == MSG_SUBSCRIBE:
                    topic = payload.entries["topic"].value
                    with self.lock:
                        self.topics.setdefault(topic, []).append(conn)
                    subscribed.append((topic, conn))
                    send_frame(conn, MSG_SUBSCRIBE, Map({"topic": String(topic)}))
                else:
                    topic = payload.entries["topic"].value
                    with self.lock:
                        targets = list(self.topics.get(topic, ()))
                    for target in targets:
                        try:
                            send_frame(target, msg_type, payload)
                        except OSError:
                            with self.lock:
                                if target in self.topics.get(topic, ()):
                                    self.topics[topic].remove(target)
        finally:
            with self.lock:
                for topic, sub_conn in subscribed:
                    if sub_conn in self.topics.get(topic, ()):
                        self.topics[topic].remove(sub_conn)
            conn.close()


class PubSubSubscriber:
    """Subscribes to one topic and forwards frames to a sink."""

    def __init__(self, endpoint: tuple[str, int], topic: str, sink: Callable[[Map], None]):
        self.sock = socket.create_connection(endpoint)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_frame(self.sock, MSG_SUBSCRIBE, Map({"topic": String(topic)}))
        recv_frame(self.sock)  # subscription ack
        self.sink = sink
        self._stopping = threading.Event()
        threading.Thread(target=self._read_loop, daemon=True).start()

    def _read_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                _, payload = recv_frame(self.sock)
            except (ConnectionClosed, ProtocolError, OSError):
                return
            self.sink(payload)

    def close(self) -> None:
        self._stopping.set()
        try:
            self.sock.close()
        except OSError:
            pass
