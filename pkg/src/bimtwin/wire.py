"""Wire protocol for the supervisor console.

Line-delimited JSON frames over a browser-friendly bidirectional socket.
Every frame is one envelope:

    {"type": "event|command|ack|error", "seq": n, "session": "s...",
     "version": 1, "payload": {...}}

Sequence numbers increase strictly per direction. Unknown or malformed
frames are answered with an error frame, never dropped silently. A client
opens with a ``hello`` command carrying its schema version; the server
answers with an ack naming the session, then replays the full event log
(catch-up) before the live tail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PROTOCOL_VERSION = 1

FRAME_TYPES = ("event", "command", "ack", "error")


class WireError(Exception):
    pass


@dataclass(frozen=True)
class WireMessage:
    type: str
    seq: int
    session: str
    payload: dict = field(default_factory=dict)
    version: int = PROTOCOL_VERSION

    def serialize(self) -> str:
        if self.type not in FRAME_TYPES:
            raise WireError(f"unknown frame type {self.type!r}")
        return json.dumps(
            {
                "type": self.type,
                "seq": self.seq,
                "session": self.session,
                "version": self.version,
                "payload": self.payload,
            },
            sort_keys=True,
        )


def parse_frame(text: str) -> WireMessage:
    """Parse one frame; raises WireError on anything malformed."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WireError(f"frame is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise WireError("frame must be a JSON object")
    ftype = data.get("type")
    if ftype not in FRAME_TYPES:
        raise WireError(f"unknown frame type {ftype!r}")
    for key in ("seq", "session", "version"):
        if key not in data:
            raise WireError(f"frame missing {key!r}")
    if not isinstance(data["seq"], int):
        raise WireError("seq must be an integer")
    payload = data.get("payload", {})
    if not isinstance(payload, dict):
        raise WireError("payload must be an object")
    return WireMessage(ftype, data["seq"], str(data["session"]), payload, int(data["version"]))


def event_frame(record, session: str) -> WireMessage:
    """Wrap one engine log record for the stream."""
    payload = {
        "name": record.name,
        "kind": record.kind,
        "time": record.time,
        "state": record.state,
        "data": record.data,
    }
    if record.applied is not None:
        payload["applied"] = record.applied
    return WireMessage("event", record.seq, session, payload)


def ack_frame(seq: int, session: str, payload: dict) -> WireMessage:
    return WireMessage("ack", seq, session, payload)


def error_frame(seq: int, session: str, description: str) -> WireMessage:
    return WireMessage("error", seq, session, {"description": description})
