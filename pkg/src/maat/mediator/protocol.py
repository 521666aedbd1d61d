"""Agent wire protocol: newline-delimited JSON envelopes ``{type, msg_id, body}``.

Both transports speak the same bytes. ``InProcessTransport`` delivers lines
to agents in the same process on a logical clock; the TCP pair uses real
sockets.
"""
from __future__ import annotations

import itertools
import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

_STR = (str,)
_INT = (int,)

# required body fields per message type
SCHEMAS: dict[str, dict[str, tuple[type, ...]]] = {
    "SUBMIT_INTENT": {"intent_text": _STR, "requester": _STR},
    "RESULT": {"outcome": (dict,)},
    "ESCALATE": {"intent_text": _STR, "requester": _STR, "hop_count": _INT},
    "ADVERTIZE": {"service": _STR, "attrs": (dict,), "origin": _STR},
    "PING": {},
    "PONG": {},
    "LIST_SESSIONS": {},
    "SESSIONS": {"sessions": (list,)},
    "ERROR": {"code": _STR, "message": _STR},
}

MAX_LINE = 1 << 20

_ids = itertools.count(1)


def next_msg_id() -> str:
    return f"m{next(_ids)}"


class ProtocolError(ValueError):
    def __init__(self, code: str, message: str, msg_id: str | None = None):
        super().__init__(message)
        self.code = code
        self.msg_id = msg_id


class TransportError(ConnectionError):
    """The peer could not be reached or did not answer in time."""


@dataclass(frozen=True)
class Envelope:
    type: str
    body: Mapping[str, Any] = field(default_factory=dict)
    msg_id: str = field(default_factory=next_msg_id)

    def to_json(self) -> dict[str, Any]:
        return {"type": self.type, "msg_id": self.msg_id, "body": dict(self.body)}


def encode(env: Envelope) -> bytes:
    validate(env.type, env.body, env.msg_id)
    return (json.dumps(env.to_json(), sort_keys=True, separators=(",", ":")) + "\n").encode()


def decode(line: bytes | str) -> Envelope:
    if isinstance(line, bytes):
        if len(line) > MAX_LINE:
            raise ProtocolError("too_large", f"message exceeds {MAX_LINE} bytes")
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            raise ProtocolError("bad_encoding", "message is not UTF-8") from None
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError("bad_json", f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ProtocolError("bad_envelope", "envelope must be an object")
    msg_id = doc.get("msg_id")
    if not isinstance(msg_id, (str, int)) or isinstance(msg_id, bool):
        raise ProtocolError("bad_envelope", "msg_id must be a string or integer")
    msg_id = str(msg_id)
    mtype, body = doc.get("type"), doc.get("body", {})
    if not isinstance(body, dict):
        raise ProtocolError("bad_envelope", "body must be an object", msg_id)
    validate(mtype, body, msg_id)
    return Envelope(mtype, body, msg_id)


def validate(mtype: Any, body: Mapping[str, Any], msg_id: str | None = None) -> None:
    schema = SCHEMAS.get(mtype) if isinstance(mtype, str) else None
    if schema is None:
        raise ProtocolError("unknown_type", f"unknown message type {mtype!r}", msg_id)
    for key, types in schema.items():
        v = body.get(key)
        if not isinstance(v, types) or isinstance(v, bool):
            raise ProtocolError("bad_body", f"{mtype}.{key} missing or of the wrong type", msg_id)
    if mtype == "ESCALATE" and body["hop_count"] < 1:
        raise ProtocolError("bad_body", "hop_count must be positive", msg_id)


def error_envelope(code: str, message: str, msg_id: str | None = None) -> Envelope:
    return Envelope("ERROR", {"code": code, "message": message}, msg_id or next_msg_id())


# --------------------------------------------------------------------------
# in-process transport

LineHandler = Callable[[bytes], bytes]


class InProcessTransport:
    """Routes envelopes between agents living in one process.

    Endpoints map to agents (anything with ``handle_line`` and ``config.online``).
    An offline or unknown endpoint costs the caller ``connect_timeout`` on
    ``clock`` and raises :class:`TransportError`.
    """

    def __init__(self, clock=None):
        self.clock = clock
        self.endpoints: dict[str, Any] = {}

    def register(self, endpoint: str, agent) -> None:
        self.endpoints[endpoint] = agent

    def request(self, endpoint: str, env: Envelope, timeout: float,
                connect_timeout: float | None = None) -> Envelope:
        agent = self.endpoints.get(endpoint)
        if agent is None or not agent.config.online:
            wait = timeout if connect_timeout is None else connect_timeout
            if self.clock is not None:
                self.clock.advance(wait)
            raise TransportError(f"{endpoint} did not answer within {wait}s")
        return decode(agent.handle_line(encode(env)))


# --------------------------------------------------------------------------
# TCP

def split_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint {endpoint!r} is not host:port")
    return host or "127.0.0.1", int(port)


class TcpTransport:
    def request(self, endpoint: str, env: Envelope, timeout: float,
                connect_timeout: float | None = None) -> Envelope:
        return tcp_request(endpoint, env, timeout, connect_timeout)


def tcp_request(endpoint: str, env: Envelope, timeout: float,
                connect_timeout: float | None = None) -> Envelope:
    host, port = split_endpoint(endpoint)
    try:
        with socket.create_connection((host, port), timeout=connect_timeout or timeout) as sock:
            sock.settimeout(timeout)
            sock.sendall(encode(env))
            with sock.makefile("rb") as fh:
                line = fh.readline(MAX_LINE + 1)
    except OSError as exc:
        raise TransportError(f"{endpoint}: {exc}") from None
    if not line:
        raise TransportError(f"{endpoint} closed the connection without replying")
    return decode(line)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            if not line.strip():
                continue
            self.wfile.write(self.server.on_line(line))
            self.wfile.flush()


class AgentServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], on_line: LineHandler):
        self.on_line = on_line
        super().__init__(address, _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def serve_tcp(on_line: LineHandler, listen: str) -> AgentServer:
    return AgentServer(split_endpoint(listen), on_line)
