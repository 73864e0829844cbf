"""Wire protocol: framing and payload schemas shared by servers and clients."""

from .frames import (
    MAGIC,
    MSG_ADMIN,
    MSG_COMMIT,
    MSG_COMMIT_STATUS,
    MSG_ERROR,
    MSG_MNS_REGISTER,
    MSG_MNS_RESOLVE,
    MSG_MNS_RESULT,
    MSG_NOTIFY,
    MSG_QUERY,
    MSG_QUERY_RESULT,
    MSG_SUBSCRIBE,
    MSG_UNSUBSCRIBE,
    ConnectionClosed,
    ProtocolError,
    pack_frame,
    recv_frame,
    send_frame,
)
from .messages import (
    commit_from_payload,
    commit_to_payload,
    error_payload,
    notify_from_payload,
    notify_to_payload,
    query_from_payload,
    query_to_payload,
    result_from_payload,
    result_to_payload,
    statuses_from_payload,
    statuses_to_payload,
)

__all__ = [name for name in dir() if not name.startswith("_")]
