"""Master/agent wire protocol.

Agents dial the master and hold one persistent TCP connection (the master
cannot wake an agent). Frames are UTF-8 JSON objects, one per line, each
carrying ``kind``, a per-direction strictly increasing gapless ``seq``, and
a kind-specific ``body``. Log payloads travel base64-encoded in bounded
chunks with their own gapless chunk index.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

PROTOCOL_VERSION = 1
DEFAULT_AGENT_PORT = 7478
HEARTBEAT_INTERVAL = 10.0
HEARTBEAT_TIMEOUT = 30.0
MAX_CHUNK_BYTES = 64 * 1024


class Kind(str, Enum):
    HELLO = "HELLO"
    HELLO_ACK = "HELLO_ACK"
    HEARTBEAT = "HEARTBEAT"
    ASSIGN = "ASSIGN"
    ACCEPT = "ACCEPT"
    LOG_CHUNK = "LOG_CHUNK"
    RESULT = "RESULT"
    CANCEL = "CANCEL"
    ERROR = "ERROR"


class ProtocolError(ValueError):
    pass


class MalformedFrame(ProtocolError):
    pass


class UnknownKind(ProtocolError):
    def __init__(self, kind: str):
        super().__init__(f"unknown message kind {kind!r}")
        self.kind = kind


class SeqRegression(ProtocolError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"sequence violation: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class VersionMismatch(ProtocolError):
    def __init__(self, ours: int, theirs: int):
        super().__init__(f"protocol version mismatch: master={ours}, agent={theirs}")


class UnknownPlatform(ProtocolError):
    def __init__(self, platform: str):
        super().__init__(f"platform {platform!r} is not registered in the master config")
        self.platform = platform


@dataclass(frozen=True)
class WireMessage:
    kind: Kind
    seq: int
    body: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AgentHello:
    agent_name: str
    platform: str
    cores: int = 1
    memory_mb: int = 0
    os_descriptor: str = ""
    protocol_version: int = PROTOCOL_VERSION

    def to_body(self) -> dict[str, Any]:
        return {
            "agent_name": self.agent_name,
            "platform": self.platform,
            "cores": self.cores,
            "memory_mb": self.memory_mb,
            "os_descriptor": self.os_descriptor,
            "protocol_version": self.protocol_version,
        }

    @classmethod
    def from_body(cls, body: dict[str, Any]) -> "AgentHello":
        try:
            return cls(
                agent_name=str(body["agent_name"]),
                platform=str(body["platform"]),
                cores=int(body.get("cores", 1)),
                memory_mb=int(body.get("memory_mb", 0)),
                os_descriptor=str(body.get("os_descriptor", "")),
                protocol_version=int(body["protocol_version"]),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedFrame(f"bad HELLO body: {exc}") from exc


WORKSPACE_POLICIES = ("clean_after", "keep")


@dataclass(frozen=True)
class Assignment:
    """Everything an agent needs to run one build."""

    build_id: int
    repo_id: str
    sha: str
    script_text: str
    script_name: str
    bindings: tuple[tuple[str, str], ...]
    workspace_policy: str = "clean_after"

    def __post_init__(self) -> None:
        if self.workspace_policy not in WORKSPACE_POLICIES:
            raise ProtocolError(f"bad workspace policy {self.workspace_policy!r}")
        names = {n for n, _ in self.bindings}
        if "ARCH" not in names or "MATLAB_VER" not in names:
            raise ProtocolError("assignment bindings must include ARCH and MATLAB_VER")

    def to_body(self) -> dict[str, Any]:
        return {
            "build_id": self.build_id,
            "repo_id": self.repo_id,
            "sha": self.sha,
            "script_text": self.script_text,
            "script_name": self.script_name,
            "bindings": [[n, v] for n, v in self.bindings],
            "workspace_policy": self.workspace_policy,
        }

    @classmethod
    def from_body(cls, body: dict[str, Any]) -> "Assignment":
        try:
            return cls(
                build_id=int(body["build_id"]),
                repo_id=str(body["repo_id"]),
                sha=str(body["sha"]),
                script_text=str(body["script_text"]),
                script_name=str(body["script_name"]),
                bindings=tuple((str(n), str(v)) for n, v in body["bindings"]),
                workspace_policy=str(body.get("workspace_policy", "clean_after")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFrame(f"bad ASSIGN body: {exc}") from exc


def encode(msg: WireMessage) -> bytes:
    """One JSON object per line; keys sorted for stable bytes."""
    frame = {"kind": msg.kind.value, "seq": msg.seq, "body": msg.body}
    return json.dumps(frame, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"


def decode(frame: bytes) -> WireMessage:
    try:
        obj = json.loads(frame.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"undecodable frame: {exc}") from exc
    if not isinstance(obj, dict) or "kind" not in obj:
        raise MalformedFrame("frame is not an object with a 'kind' field")
    kind_raw = obj["kind"]
    try:
        kind = Kind(kind_raw)
    except ValueError:
        raise UnknownKind(str(kind_raw)) from None
    seq = obj.get("seq")
    if not isinstance(seq, int) or seq < 0:
        raise MalformedFrame(f"bad seq {seq!r}")
    body = obj.get("body", {})
    if not isinstance(body, dict):
        raise MalformedFrame("body must be an object")
    return WireMessage(kind=kind, seq=seq, body=body)


class SequenceTracker:
    """Enforces the strictly-increasing gapless seq per (connection,
    direction); one tracker per incoming stream."""

    def __init__(self, start: int = 0) -> None:
        self._next = start

    def check(self, seq: int) -> None:
        if seq != self._next:
            raise SeqRegression(self._next, seq)
        self._next += 1

    @property
    def next_expected(self) -> int:
        return self._next


class SequenceSource:
    """Allocates outgoing seq numbers for one direction of one connection."""

    def __init__(self, start: int = 0) -> None:
        self._next = start

    def take(self) -> int:
        value = self._next
        self._next += 1
        return value


class ChunkTracker:
    """Gapless, zero-based chunk indices per build's log stream."""

    def __init__(self) -> None:
        self._next: dict[int, int] = {}

    def check(self, build_id: int, chunk_index: int) -> None:
        expected = self._next.get(build_id, 0)
        if chunk_index != expected:
            raise SeqRegression(expected, chunk_index)
        self._next[build_id] = expected + 1


def validate_hello(hello: AgentHello, platforms: set[str], master_version: int = PROTOCOL_VERSION) -> None:
    """Handshake admission rules; raises on rejection."""
    if hello.protocol_version != master_version:
        raise VersionMismatch(master_version, hello.protocol_version)
    if hello.platform not in platforms:
        raise UnknownPlatform(hello.platform)


def hello_ack(seq: int, heartbeat_interval: float = HEARTBEAT_INTERVAL) -> WireMessage:
    return WireMessage(Kind.HELLO_ACK, seq, {"heartbeat_interval": heartbeat_interval})


def error_message(seq: int, name: str, detail: str = "") -> WireMessage:
    return WireMessage(Kind.ERROR, seq, {"error": name, "detail": detail})


def log_chunk(seq: int, build_id: int, chunk_index: int, data: bytes) -> WireMessage:
    if len(data) > MAX_CHUNK_BYTES:
        raise ProtocolError(f"chunk exceeds {MAX_CHUNK_BYTES} bytes")
    return WireMessage(
        Kind.LOG_CHUNK,
        seq,
        {
            "build_id": build_id,
            "chunk_index": chunk_index,
            "data": base64.b64encode(data).decode("ascii"),
        },
    )


def chunk_payload(msg: WireMessage) -> tuple[int, int, bytes]:
    """(build_id, chunk_index, bytes) of a LOG_CHUNK."""
    if msg.kind is not Kind.LOG_CHUNK:
        raise MalformedFrame(f"not a LOG_CHUNK: {msg.kind}")
    try:
        build_id = int(msg.body["build_id"])
        chunk_index = int(msg.body["chunk_index"])
        data = base64.b64decode(msg.body["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFrame(f"bad LOG_CHUNK body: {exc}") from exc
    return build_id, chunk_index, data


def split_chunks(data: bytes, max_bytes: int = MAX_CHUNK_BYTES) -> list[bytes]:
    """Split a byte run into maximum-size chunk payloads."""
    if not data:
        return []
    return [data[i : i + max_bytes] for i in range(0, len(data), max_bytes)]


class FrameReader:
    """Incremental newline-delimited frame splitter for a byte stream."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buffer.extend(data)
        messages = []
        while True:
            nl = self._buffer.find(b"\n")
            if nl < 0:
                break
            frame = bytes(self._buffer[:nl])
            del self._buffer[: nl + 1]
            if frame.strip():
                messages.append(decode(frame))
        return messages
