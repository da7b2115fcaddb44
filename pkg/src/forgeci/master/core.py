"""The orchestrating state machine: webhook ingestion, matrix scheduling,
dispatch, result recording, retention, the nightly maintenance gate, and
trend series.

Every mutation runs under one lock, so the scheduler behaves as a single
logical state machine no matter how many agent connections or HTTP threads
feed it. The clock is injected to keep heartbeat-timeout and maintenance
logic testable.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from collections import deque
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from enum import Enum
from threading import RLock
from typing import Callable, Optional, Union

from .. import model, status as status_mod
from ..model import (
    Build,
    BuildState,
    CommitRef,
    TriggerCause,
    TriggerEvent,
    TriggerGroup,
)
from ..pipeline import EnvBinding, PipelineError, generate_hudson_script, parse_pipeline
from ..protocol import Assignment
from .config import ConfigInvalid, MasterConfig, load_master_config

_HEX_RE = re.compile(r"^[0-9a-f]{7,40}$")


class MasterError(ValueError):
    pass


class BadSignature(MasterError):
    pass


class MalformedPayload(MasterError):
    pass


class NoSuchJob(MasterError):
    def __init__(self, name: str):
        super().__init__(f"no job named {name!r}")
        self.job = name


class NotManuallyTriggerable(MasterError):
    def __init__(self, name: str):
        super().__init__(f"job {name!r} is not manually triggerable")
        self.job = name


class BadSha(MasterError):
    def __init__(self, sha: str, reason: str = "malformed"):
        super().__init__(f"bad sha {sha!r}: {reason}")
        self.sha = sha


class UnknownBuild(MasterError):
    def __init__(self, build_id: int):
        super().__init__(f"no build {build_id}")
        self.build_id = build_id


class NotRunning(MasterError):
    def __init__(self, build_id: int, state: BuildState):
        super().__init__(f"build {build_id} is {state.value}, not Running")
        self.build_id = build_id


class AgentState(str, Enum):
    IDLE = "idle"
    BUSY = "busy"
    LOST = "lost"


@dataclass
class AgentRecord:
    name: str
    platform: str
    state: AgentState = AgentState.IDLE
    build_id: Optional[int] = None
    last_seen: float = 0.0


@dataclass(frozen=True)
class WebhookEvent:
    kind: str  # push | pr_opened | pr_synchronized | status_changed
    repo_id: str
    sha: str
    branch: Optional[str] = None
    pr_number: Optional[int] = None
    sender: str = ""
    delivery_id: str = ""

    KINDS = ("push", "pr_opened", "pr_synchronized", "status_changed")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise MalformedPayload(f"unknown event kind {self.kind!r}")
        if not model.SHA_RE.match(self.sha or ""):
            raise MalformedPayload(f"event sha must be 40 hex chars, got {self.sha!r}")
        if self.kind == "push" and not self.branch:
            raise MalformedPayload("push event requires a branch")
        if self.kind.startswith("pr_") and not self.pr_number:
            raise MalformedPayload("pull-request event requires pr_number")

    @classmethod
    def from_payload(cls, kind: str, delivery_id: str, payload: dict) -> "WebhookEvent":
        if not isinstance(payload, dict):
            raise MalformedPayload("payload must be a JSON object")
        try:
            return cls(
                kind=kind,
                repo_id=str(payload.get("repo_id", "")),
                sha=str(payload.get("sha", "")),
                branch=payload.get("branch"),
                pr_number=payload.get("pr_number"),
                sender=str(payload.get("sender", "")),
                delivery_id=delivery_id,
            )
        except MalformedPayload:
            raise
        except (TypeError, ValueError) as exc:
            raise MalformedPayload(str(exc)) from exc

    def event_id(self) -> str:
        material = f"{self.kind}|{self.sha}|{self.pr_number or ''}|{self.delivery_id}"
        return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Ignored:
    reason: str


@dataclass(frozen=True)
class TrendSeries:
    job_name: str
    points: tuple[tuple[int, int, BuildState], ...]  # (build_id, duration_ms, final state)

    def to_dict(self) -> dict:
        return {
            "job_name": self.job_name,
            "points": [
                {"build_id": b, "duration_ms": d, "state": s.value} for b, d, s in self.points
            ],
        }


NotifySink = Callable[[Build, str], None]

_STATE_TO_STATUS = {
    BuildState.PENDING: status_mod.StatusState.PENDING,
    BuildState.RUNNING: status_mod.StatusState.PENDING,
    BuildState.SUCCESS: status_mod.StatusState.SUCCESS,
    BuildState.FAILURE: status_mod.StatusState.FAILURE,
    BuildState.ABORTED: status_mod.StatusState.FAILURE,
}


class MasterCore:
    """Scheduler state machine; every public method is one serialized step."""

    def __init__(
        self,
        config: MasterConfig,
        store,
        status_client=None,
        notify: Optional[NotifySink] = None,
        clock: Callable[[], float] = time.time,
        config_path: Optional[str] = None,
        status_sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.store = store
        self.status_client = status_client or status_mod.InMemoryStatusClient()
        self.notify = notify or (lambda build, message: None)
        self.clock = clock
        self.config_path = config_path
        self.status_sleep = status_sleep
        self.status_audit: list[status_mod.AuditEntry] = []

        self._lock = RLock()
        self.builds: dict[int, Build] = {}
        self.groups: dict[str, TriggerGroup] = {}
        self.queues: dict[str, deque[int]] = {}
        self.agents: dict[str, AgentRecord] = {}
        self.branch_heads: dict[str, str] = {}  # branch -> latest sha seen
        self._next_build_id = 1
        self._last_reload = clock()
        self._recover()

    # --- persistence recovery ------------------------------------------------

    def _recover(self) -> None:
        """Reload persisted builds; Pending builds re-enter their queues,
        Running builds are orphaned (their agent connection died with us)."""
        for build in self.store.load_builds():
            if build.state is BuildState.RUNNING:
                build = build.transition(
                    BuildState.FAILURE, exit_code=1, finished=self.clock(), cause="orphaned"
                )
                self.store.save_build(build)
            self.builds[build.id] = build
            self._next_build_id = max(self._next_build_id, build.id + 1)
            if build.state is BuildState.PENDING:
                self.queues.setdefault(build.platform, deque()).append(build.id)
        for group in self.store.load_groups():
            self.groups[group.event_id] = group
            if group.commit.branch:
                self.branch_heads.setdefault(group.commit.branch, group.commit.sha)

    # --- trigger paths ---------------------------------------------------------

    def ingest_webhook(self, event: WebhookEvent) -> Union[TriggerGroup, Ignored]:
        with self._lock:
            if self.config.bot_account and event.sender == self.config.bot_account:
                return Ignored("self-event")
            event_id = event.event_id()
            if event_id in self.groups:
                return Ignored("duplicate-delivery")

            if event.kind == "push":
                cause = TriggerCause.BRANCH_PUSH
            elif event.kind in ("pr_opened", "pr_synchronized"):
                cause = TriggerCause.PR_UPDATE
            else:
                return Ignored("no-builds")

            commit = CommitRef(
                repo_id=event.repo_id,
                sha=event.sha,
                branch=event.branch,
                pr_number=event.pr_number,
            )
            trigger = TriggerEvent(cause=cause, commit=commit)
            return self._create_group(event_id, trigger)

    def manual_trigger(self, job_name: str, sha: str, actor: str = "") -> TriggerGroup:
        with self._lock:
            job = self.config.jobs.get(job_name)
            if job is None:
                raise NoSuchJob(job_name)
            if not job.trigger.is_manual:
                raise NotManuallyTriggerable(job_name)
            full_sha = self.resolve_sha(sha)
            event_id = hashlib.sha256(
                f"manual|{job_name}|{full_sha}|{self.clock()}".encode()
            ).hexdigest()
            trigger = TriggerEvent(
                cause=TriggerCause.MANUAL,
                commit=CommitRef(repo_id="manual", sha=full_sha),
                job_name=job_name,
            )
            group = self._create_group(event_id, trigger)
            self.store.append_audit(
                {"action": "manual_trigger", "job": job_name, "sha": full_sha,
                 "actor": actor, "at": self.clock()}
            )
            return group

    def resolve_sha(self, sha: str) -> str:
        """Accept abbreviated (>= 7 hex chars) SHAs at the API boundary and
        expand them against every commit this master has seen; full SHAs
        pass through."""
        with self._lock:
            sha = (sha or "").lower()
            if not _HEX_RE.match(sha):
                raise BadSha(sha, "must be 7-40 lowercase hex chars")
            if len(sha) == 40:
                return sha
            known = {b.commit.sha for b in self.builds.values()}
            known.update(g.commit.sha for g in self.groups.values())
            matches = sorted({k for k in known if k.startswith(sha)})
            if not matches:
                raise BadSha(sha, "abbreviation matches no known commit")
            if len(matches) > 1:
                raise BadSha(sha, "abbreviation is ambiguous")
            return matches[0]

    def _create_group(self, event_id: str, trigger: TriggerEvent) -> Union[TriggerGroup, Ignored]:
        builds = model.expand_matrix(trigger, self.config.jobs, start_id=self._next_build_id)
        if not builds:
            return Ignored("no-builds")
        self._next_build_id += len(builds)
        for build in builds:
            build = self._with_log_ref(build)
            self.builds[build.id] = build
            self.store.save_build(build)
            self.queues.setdefault(build.platform, deque()).append(build.id)
            self._set_status(build)
        group = TriggerGroup(
            event_id=event_id,
            cause=trigger.cause,
            commit=trigger.commit,
            builds=tuple(b.id for b in builds),
        )
        self.groups[event_id] = group
        self.store.save_group(group)
        if trigger.commit.branch:
            self.branch_heads[trigger.commit.branch] = trigger.commit.sha
        return group

    @staticmethod
    def _with_log_ref(build: Build) -> Build:
        return replace(build, log_ref=f"{build.job_name}/{build.id}.log")

    # --- status plumbing ---------------------------------------------------------

    def _set_status(self, build: Build) -> None:
        state = _STATE_TO_STATUS[build.state]
        context = status_mod.make_context(build.job_name, build.version, build.platform)
        url = (
            f"{self.config.url()}/job/{build.job_name}/{build.id}/"
            f"{build.version}/{build.platform}/console"
        )
        description = build.state.value
        try:
            status_mod.set_status(
                self.status_client,
                status_mod.CommitStatus(build.commit.sha, context, state, url, description),
                sleep=self.status_sleep,
            )
        except status_mod.PermanentClientError:
            pass  # logged at the service layer; build state is unaffected

    def expected_cells(self, sha: str) -> list[tuple[str, str]]:
        cells: list[tuple[str, str]] = []
        for build in sorted(self.builds.values(), key=lambda b: b.id):
            if build.commit.sha == sha and (build.platform, build.version) not in cells:
                cells.append((build.platform, build.version))
        return cells

    def status_matrix(self, sha: str) -> status_mod.PlatformStatusMatrix:
        with self._lock:
            statuses = self.status_client.list(sha)
            return status_mod.aggregate(statuses, self.expected_cells(sha), sha=sha)

    def badge(self, platform: str) -> status_mod.Badge:
        """Badge for the latest commit seen on the badge branch."""
        with self._lock:
            sha = self.branch_heads.get(self.config.badge_branch)
            if sha is None:
                return status_mod.render_badge(platform, status_mod.StatusState.PENDING)
            matrix = self.status_matrix(sha)
            state = matrix.platform(platform) or status_mod.StatusState.PENDING
            return status_mod.render_badge(platform, state)

    # --- agents & dispatch ---------------------------------------------------------

    def register_agent(self, name: str, platform: str) -> list[str]:
        """Register (or re-register) an agent; returns names of superseded
        registrations (same name, or a different agent holding the label)."""
        with self._lock:
            superseded = []
            for other in list(self.agents.values()):
                if other.name == name or (
                    other.platform == platform and other.state is not AgentState.LOST
                ):
                    if other.name != name:
                        superseded.append(other.name)
                    self._abandon_agent(other, cause="agent_lost")
                    del self.agents[other.name]
            self.agents[name] = AgentRecord(
                name=name, platform=platform, state=AgentState.IDLE, last_seen=self.clock()
            )
            return superseded

    def _abandon_agent(self, agent: AgentRecord, cause: str) -> None:
        if agent.state is AgentState.BUSY and agent.build_id is not None:
            build = self.builds.get(agent.build_id)
            if build is not None and build.state is BuildState.RUNNING:
                self._finish_build(build, exit_code=1, cause=cause)
        agent.state = AgentState.LOST
        agent.build_id = None

    def deregister_agent(self, name: str) -> None:
        """Connection closed: the agent is gone; fail its running build."""
        with self._lock:
            agent = self.agents.get(name)
            if agent is None:
                return
            self._abandon_agent(agent, cause="agent_lost")
            del self.agents[name]

    def heartbeat(self, name: str) -> None:
        with self._lock:
            agent = self.agents.get(name)
            if agent is not None:
                agent.last_seen = self.clock()

    def check_liveness(self, now: Optional[float] = None) -> list[str]:
        """Mark agents silent past the timeout Lost; their running build
        fails with cause agent_lost. Returns the lost agent names."""
        with self._lock:
            now = self.clock() if now is None else now
            lost = []
            for agent in self.agents.values():
                if agent.state is AgentState.LOST:
                    continue
                if now - agent.last_seen > self.config.heartbeat_timeout:
                    self._abandon_agent(agent, cause="agent_lost")
                    lost.append(agent.name)
            return lost

    def dispatch(self) -> list[tuple[str, Assignment]]:
        """Hand the oldest Pending build of the right platform to every idle
        agent; at most one build per agent."""
        with self._lock:
            assignments: list[tuple[str, Assignment]] = []
            for agent in self.agents.values():
                if agent.state is not AgentState.IDLE:
                    continue
                queue = self.queues.get(agent.platform)
                if not queue:
                    continue
                build_id = queue.popleft()
                build = self.builds[build_id]
                try:
                    assignment = self._make_assignment(build)
                except PipelineError as exc:
                    build = build.transition(BuildState.ABORTED, cause=f"pipeline_error: {exc}")
                    self.builds[build_id] = build
                    self.store.save_build(build)
                    self._set_status(build)
                    continue
                build = build.transition(BuildState.RUNNING, started=self.clock())
                self.builds[build_id] = build
                self.store.save_build(build)
                self._set_status(build)
                agent.state = AgentState.BUSY
                agent.build_id = build_id
                assignments.append((agent.name, assignment))
            return assignments

    def _make_assignment(self, build: Build) -> Assignment:
        job = self.config.jobs.get(build.job_name)
        pipeline_path = os.path.join(
            self.config.repo_path, job.pipeline_path if job else "travis.yml"
        )
        try:
            with open(pipeline_path, "r", encoding="utf-8") as fh:
                spec = parse_pipeline(fh.read())
        except OSError as exc:
            raise PipelineError(f"cannot read pipeline {pipeline_path!r}: {exc}") from exc
        bindings = (
            EnvBinding("ARCH", build.platform),
            EnvBinding("MATLAB_VER", build.version),
            EnvBinding("COMMIT_SHA", build.commit.sha),
            EnvBinding("JOB_NAME", build.job_name),
            EnvBinding("BUILD_ID", str(build.id)),
        )
        script = generate_hudson_script(spec, bindings)
        return Assignment(
            build_id=build.id,
            repo_id=build.commit.repo_id,
            sha=build.commit.sha,
            script_text=script.text,
            script_name=script.filename,
            bindings=tuple((b.name, b.value) for b in bindings),
            workspace_policy="clean_after",
        )

    # --- results -------------------------------------------------------------------

    def record_result(self, build_id: int, exit_code: int, log_complete: bool = True) -> Build:
        with self._lock:
            build = self.builds.get(build_id)
            if build is None:
                raise UnknownBuild(build_id)
            if build.state is not BuildState.RUNNING:
                raise NotRunning(build_id, build.state)
            cause = None if log_complete else "log-incomplete"
            build = self._finish_build(build, exit_code=exit_code, cause=cause)
            for agent in self.agents.values():
                if agent.build_id == build_id:
                    agent.state = AgentState.IDLE
                    agent.build_id = None
            return build

    def _finish_build(self, build: Build, exit_code: int, cause: Optional[str]) -> Build:
        state = BuildState.SUCCESS if exit_code == 0 else BuildState.FAILURE
        build = build.transition(state, exit_code=exit_code, finished=self.clock(), cause=cause)
        self.builds[build.id] = build
        self.store.save_build(build)
        self._set_status(build)
        if state is BuildState.FAILURE:
            reason = cause or f"exit code {exit_code}"
            self.notify(build, f"build {build.job_name}#{build.id} failed ({reason})")
        return build

    def append_log(self, build_id: int, data: bytes) -> None:
        with self._lock:
            build = self.builds.get(build_id)
            if build is None:
                raise UnknownBuild(build_id)
            self.store.append_log(build.log_ref, data)

    # --- retention & maintenance ------------------------------------------------------

    def prune_retention(self, keep_last: Optional[int] = None) -> int:
        """Discard logs beyond the newest ``keep_last`` builds of each job;
        records always survive. Returns the number of logs deleted."""
        with self._lock:
            keep = self.config.retention if keep_last is None else keep_last
            if keep < 1:
                raise MasterError("keep_last must be >= 1")
            discarded = 0
            by_job: dict[str, list[Build]] = {}
            for build in self.builds.values():
                by_job.setdefault(build.job_name, []).append(build)
            for builds in by_job.values():
                builds.sort(key=lambda b: b.id, reverse=True)
                for build in builds[keep:]:
                    if build.log_ref and self.store.has_log(build.log_ref):
                        if self.store.delete_log(build.log_ref):
                            discarded += 1
            return discarded

    def maintenance_reload(self, now: Optional[float] = None) -> tuple[str, str]:
        """Nightly reload gate: past the configured time and only when no
        build is running, re-read the config atomically. Returns
        ("reloaded", "") or ("skipped", reason)."""
        with self._lock:
            now = self.clock() if now is None else now
            due_at = self._most_recent_scheduled(now)
            if self._last_reload >= due_at:
                return ("skipped", "not-due")
            if any(b.state is BuildState.RUNNING for b in self.builds.values()):
                return ("skipped", "busy")
            if self.config_path:
                new_config = load_master_config(self.config_path)  # ConfigInvalid propagates
                self.config = new_config
            self._last_reload = now
            return ("reloaded", "")

    def _most_recent_scheduled(self, now: float) -> float:
        hour, minute = self.config.maintenance_time
        local = datetime.fromtimestamp(now)
        scheduled = local.replace(hour=hour, minute=minute, second=0, microsecond=0)
        if scheduled > local:
            scheduled -= timedelta(days=1)
        return scheduled.timestamp()

    # --- queries ---------------------------------------------------------------------

    def get_build(self, build_id: int) -> Build:
        with self._lock:
            build = self.builds.get(build_id)
            if build is None:
                raise UnknownBuild(build_id)
            return build

    def build_time_trend(self, job_name: str) -> TrendSeries:
        with self._lock:
            if self.config.jobs.get(job_name) is None:
                raise NoSuchJob(job_name)
            points = []
            for build in sorted(self.builds.values(), key=lambda b: b.id):
                if build.job_name != job_name or not build.state.terminal:
                    continue
                duration = build.duration_ms
                if duration is None:
                    continue
                points.append((build.id, duration, build.state))
            return TrendSeries(job_name=job_name, points=tuple(points))

    def group_for_event(self, event_id: str) -> Optional[TriggerGroup]:
        with self._lock:
            return self.groups.get(event_id)

    def counts(self) -> dict[str, int]:
        """State census; conservation checks hang off this."""
        with self._lock:
            census = {"total": len(self.builds), "pending": 0, "running": 0, "terminal": 0}
            for build in self.builds.values():
                if build.state is BuildState.PENDING:
                    census["pending"] += 1
                elif build.state is BuildState.RUNNING:
                    census["running"] += 1
                else:
                    census["terminal"] += 1
            return census
