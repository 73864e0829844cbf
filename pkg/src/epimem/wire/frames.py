"""TCP framing.

Frame layout (little-endian): magic `MEM1`, u8 message type, u32 payload
length, payload. The payload is always one encoded data-object Map with
message-specific keys.
"""

from __future__ import annotations

import socket
import struct

from ..idf import DataObject, Map, decode, encode

MAGIC = b"MEM1"
MAX_PAYLOAD = 256 * 1024 * 1024

MSG_COMMIT = 1
MSG_COMMIT_STATUS = 2
MSG_QUERY = 3
MSG_QUERY_RESULT = 4
MSG_SUBSCRIBE = 5
MSG_NOTIFY = 6
MSG_UNSUBSCRIBE = 7
MSG_MNS_REGISTER = 8
MSG_MNS_RESOLVE = 9
MSG_MNS_RESULT = 10
MSG_ADMIN = 11
MSG_ERROR = 255


class ProtocolError(ConnectionError):
    pass


class ConnectionClosed(ConnectionError):
    pass


def pack_frame(msg_type: int, payload: Map) -> bytes:
    body = encode(payload)
    if len(body) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(body)} bytes exceeds frame limit")
    return MAGIC + struct.pack("<BI", msg_type, len(body)) + body


def send_frame(sock: socket.socket, msg_type: int, payload: Map) -> None:
    sock.sendall(pack_frame(msg_type, payload))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    parts = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise ConnectionClosed("peer closed the connection")
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)


def recv_frame(sock: socket.socket) -> tuple[int, Map]:
    header = _recv_exact(sock, 9)
    if header[:4] != MAGIC:
        raise ProtocolError(f"bad magic {header[:4]!r}")
    msg_type, length = struct.unpack("<BI", header[4:])
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    payload = decode(_recv_exact(sock, length))
    if not isinstance(payload, Map):
        raise ProtocolError("frame payload is not a map")
    return msg_type, payload
