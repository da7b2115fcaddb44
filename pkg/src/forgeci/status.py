"""Per-commit status management: VCS status clients (mock-backed), per-OS
aggregation, SVG badges, and manual override.

Status contexts are ``ci/<jobName>/<version>/<platform>``. Aggregation is
closed over the *expected* matrix cells: a cell with no status yet counts as
pending, a single failing cell taints its platform, and the global state
follows the same rule over the platform states.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Optional, Protocol, Sequence


class StatusState(str, Enum):
    PENDING = "pending"
    SUCCESS = "success"
    FAILURE = "failure"


BADGE_COLORS = {
    StatusState.SUCCESS: "#4c1",
    StatusState.FAILURE: "#e05d44",
    StatusState.PENDING: "#dfb317",
}

BADGE_TEXT = {
    StatusState.SUCCESS: "passing",
    StatusState.FAILURE: "failing",
    StatusState.PENDING: "pending",
}


class StatusError(ValueError):
    pass


class MalformedContext(StatusError):
    def __init__(self, context: str):
        super().__init__(f"malformed status context {context!r}")
        self.context = context


class Unauthorized(StatusError):
    def __init__(self, actor: str):
        super().__init__(f"actor {actor!r} is not an administrator")
        self.actor = actor


class UnknownContext(StatusError):
    def __init__(self, sha: str, context: str):
        super().__init__(f"no status for {context!r} on {sha[:12]}")
        self.sha = sha
        self.context = context


class TransientClientError(StatusError):
    """Retryable delivery failure."""


class PermanentClientError(StatusError):
    """Delivery failed after all retries."""


@dataclass(frozen=True)
class CommitStatus:
    sha: str
    context: str
    state: StatusState
    target_url: str = ""
    description: str = ""


def make_context(job_name: str, version: str, platform: str) -> str:
    return f"ci/{job_name}/{version}/{platform}"


def parse_context(context: str) -> tuple[str, str, str]:
    """Split a context back into (job, version, platform)."""
    parts = context.split("/")
    if len(parts) != 4 or parts[0] != "ci" or not all(parts[1:]):
        raise MalformedContext(context)
    return parts[1], parts[2], parts[3]


class VcsStatusClient(Protocol):
    def set(self, sha: str, context: str, state: str, target_url: str, description: str) -> None:
        ...

    def list(self, sha: str) -> list[CommitStatus]:
        ...


class InMemoryStatusClient:
    """Reference mock: latest write per (sha, context) wins."""

    def __init__(self) -> None:
        self._store: dict[tuple[str, str], CommitStatus] = {}
        self._lock = threading.Lock()

    def set(self, sha: str, context: str, state: str, target_url: str = "", description: str = "") -> None:
        status = CommitStatus(sha, context, StatusState(state), target_url, description)
        with self._lock:
            self._store[(sha, context)] = status

    def list(self, sha: str) -> list[CommitStatus]:
        with self._lock:
            return [s for (s_sha, _), s in sorted(self._store.items()) if s_sha == sha]


class FileStatusClient:
    """JSON-lines-backed mock; the file is the append-only delivery log and
    the latest line per (sha, context) is the current state."""

    def __init__(self, path: str) -> None:
        self.path = path
        self._lock = threading.Lock()

    def set(self, sha: str, context: str, state: str, target_url: str = "", description: str = "") -> None:
        StatusState(state)  # validate
        record = {
            "sha": sha,
            "context": context,
            "state": state,
            "target_url": target_url,
            "description": description,
        }
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def list(self, sha: str) -> list[CommitStatus]:
        latest: dict[str, CommitStatus] = {}
        if not os.path.exists(self.path):
            return []
        with self._lock:
            with open(self.path, "r", encoding="utf-8") as fh:
                for raw in fh:
                    raw = raw.strip()
                    if not raw:
                        continue
                    rec = json.loads(raw)
                    if rec["sha"] != sha:
                        continue
                    latest[rec["context"]] = CommitStatus(
                        rec["sha"],
                        rec["context"],
                        StatusState(rec["state"]),
                        rec.get("target_url", ""),
                        rec.get("description", ""),
                    )
        return [latest[k] for k in sorted(latest)]


class FlakyStatusClient:
    """Test double that fails transiently a fixed number of times."""

    def __init__(self, inner: InMemoryStatusClient, fail_times: int) -> None:
        self.inner = inner
        self.fail_times = fail_times
        self.attempts = 0

    def set(self, sha: str, context: str, state: str, target_url: str = "", description: str = "") -> None:
        self.attempts += 1
        if self.attempts <= self.fail_times:
            raise TransientClientError(f"attempt {self.attempts} failed")
        self.inner.set(sha, context, state, target_url, description)

    def list(self, sha: str) -> list[CommitStatus]:
        return self.inner.list(sha)


def set_status(
    client: VcsStatusClient,
    status: CommitStatus,
    retries: int = 3,
    base_delay: float = 0.2,
    sleep: Callable[[float], None] = time.sleep,
) -> None:
    """Deliver a status, retrying transient failures with exponential
    backoff. Raises PermanentClientError once the attempts are spent."""
    last: Optional[Exception] = None
    for attempt in range(retries):
        try:
            client.set(status.sha, status.context, status.state.value, status.target_url, status.description)
            return
        except TransientClientError as exc:
            last = exc
            if attempt < retries - 1:
                sleep(base_delay * (2**attempt))
    raise PermanentClientError(f"status delivery failed after {retries} attempts: {last}")


@dataclass(frozen=True)
class PlatformStatusMatrix:
    sha: str
    cells: tuple[tuple[tuple[str, str], StatusState], ...]  # ((platform, version), state)
    per_platform: tuple[tuple[str, StatusState], ...]
    global_state: StatusState

    def cell(self, platform: str, version: str) -> Optional[StatusState]:
        for (p, v), state in self.cells:
            if (p, v) == (platform, version):
                return state
        return None

    def platform(self, platform: str) -> Optional[StatusState]:
        for p, state in self.per_platform:
            if p == platform:
                return state
        return None

    def to_dict(self) -> dict:
        return {
            "sha": self.sha,
            "cells": [
                {"platform": p, "version": v, "state": s.value} for (p, v), s in self.cells
            ],
            "per_platform": {p: s.value for p, s in self.per_platform},
            "global": self.global_state.value,
        }


def _combine(states: Iterable[StatusState]) -> StatusState:
    states = list(states)
    if any(s is StatusState.FAILURE for s in states):
        return StatusState.FAILURE
    if states and all(s is StatusState.SUCCESS for s in states):
        return StatusState.SUCCESS
    return StatusState.PENDING


def aggregate(
    statuses: Sequence[CommitStatus],
    expected_cells: Sequence[tuple[str, str]],
    sha: str = "",
) -> PlatformStatusMatrix:
    """Fold per-cell statuses into per-platform and global states.

    ``expected_cells`` is the full (platform, version) matrix the trigger
    created; expected cells without a status count as pending. A platform is
    successful only when every one of its cells succeeded, failing as soon
    as any cell failed, pending otherwise; the global state applies the same
    rule over the platform states.
    """
    if not sha and statuses:
        sha = statuses[0].sha
    per_cell: dict[tuple[str, str], StatusState] = {
        cell: StatusState.PENDING for cell in expected_cells
    }
    for status in statuses:
        _, version, platform = parse_context(status.context)
        per_cell[(platform, version)] = status.state

    platforms: list[str] = []
    for platform, _ in per_cell:
        if platform not in platforms:
            platforms.append(platform)
    per_platform = tuple(
        (p, _combine(state for (cp, _), state in per_cell.items() if cp == p))
        for p in platforms
    )
    global_state = _combine(state for _, state in per_platform)
    return PlatformStatusMatrix(
        sha=sha,
        cells=tuple(per_cell.items()),
        per_platform=per_platform,
        global_state=global_state,
    )


# --- badges -------------------------------------------------------------------

_CHAR_W = 7  # flat-badge approximation: fixed advance per character
_PAD = 10


@dataclass(frozen=True)
class Badge:
    platform: str
    state: StatusState
    svg: bytes


def render_badge(platform: str, state: StatusState) -> Badge:
    """Deterministic flat-style SVG badge: platform label on the left, state
    text on a colored field on the right."""
    label = platform
    value = BADGE_TEXT[state]
    color = BADGE_COLORS[state]
    lw = _CHAR_W * len(label) + _PAD
    vw = _CHAR_W * len(value) + _PAD
    total = lw + vw
    svg = f"""<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="20" role="img" aria-label="{label}: {value}">
  <linearGradient id="s" x2="0" y2="100%">
    <stop offset="0" stop-color="#bbb" stop-opacity=".1"/>
    <stop offset="1" stop-opacity=".1"/>
  </linearGradient>
  <mask id="m"><rect width="{total}" height="20" rx="3" fill="#fff"/></mask>
  <g mask="url(#m)">
    <rect width="{lw}" height="20" fill="#555"/>
    <rect x="{lw}" width="{vw}" height="20" fill="{color}"/>
    <rect width="{total}" height="20" fill="url(#s)"/>
  </g>
  <g fill="#fff" text-anchor="middle" font-family="Verdana,Geneva,DejaVu Sans,sans-serif" font-size="11">
    <text x="{lw / 2:g}" y="15" fill="#010101" fill-opacity=".3">{label}</text>
    <text x="{lw / 2:g}" y="14">{label}</text>
    <text x="{lw + vw / 2:g}" y="15" fill="#010101" fill-opacity=".3">{value}</text>
    <text x="{lw + vw / 2:g}" y="14">{value}</text>
  </g>
</svg>
"""
    return Badge(platform=platform, state=state, svg=svg.encode("utf-8"))


# --- manual override ----------------------------------------------------------

@dataclass(frozen=True)
class AuditEntry:
    actor: str
    sha: str
    context: str
    old_state: StatusState
    new_state: StatusState
    at: float


def override_status(
    client: VcsStatusClient,
    sha: str,
    context: str,
    state: StatusState,
    actor: str,
    admins: Sequence[str],
    audit_log: list[AuditEntry],
    clock: Callable[[], float] = time.time,
) -> CommitStatus:
    """Administrator override of one cell's status, with an audit entry."""
    if actor not in admins:
        raise Unauthorized(actor)
    parse_context(context)
    existing = {s.context: s for s in client.list(sha)}
    if context not in existing:
        raise UnknownContext(sha, context)
    old = existing[context]
    new = replace(old, state=state, description=f"manually set by {actor}")
    client.set(new.sha, new.context, new.state.value, new.target_url, new.description)
    audit_log.append(
        AuditEntry(actor=actor, sha=sha, context=context, old_state=old.state, new_state=state, at=clock())
    )
    return new
