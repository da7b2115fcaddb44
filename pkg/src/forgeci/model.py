"""Pure domain types and functions: build-matrix expansion, exit-code
derivation, and compatibility gating.

Everything here is an immutable value or a pure function; no I/O, no clock,
no persistence. The orchestrating service layers on top of this module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

SHA_RE = re.compile(r"^[0-9a-f]{40}$")
ABBREV_SHA_RE = re.compile(r"^[0-9a-f]{7,40}$")

DEFAULT_WATCHED_BRANCHES = ("develop", "master")
DEFAULT_PIPELINE_PATH = "travis.yml"


class ModelError(ValueError):
    """Invalid domain value or illegal state transition."""


class TriggerKind(str, Enum):
    BRANCHES_AUTO = "branches_auto"
    PR_AUTO = "pr_auto"
    BRANCHES_MANUAL = "branches_manual"
    PR_MANUAL = "pr_manual"

    @property
    def is_manual(self) -> bool:
        return self in (TriggerKind.BRANCHES_MANUAL, TriggerKind.PR_MANUAL)


class TriggerCause(str, Enum):
    BRANCH_PUSH = "branch_push"
    PR_UPDATE = "pr_update"
    MANUAL = "manual"


class BuildState(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    SUCCESS = "Success"
    FAILURE = "Failure"
    ABORTED = "Aborted"

    @property
    def terminal(self) -> bool:
        return self in (BuildState.SUCCESS, BuildState.FAILURE, BuildState.ABORTED)


# Legal lifecycle edges; anything else is a bug.
ALLOWED_TRANSITIONS: frozenset[tuple[BuildState, BuildState]] = frozenset(
    {
        (BuildState.PENDING, BuildState.RUNNING),
        (BuildState.RUNNING, BuildState.SUCCESS),
        (BuildState.RUNNING, BuildState.FAILURE),
        (BuildState.RUNNING, BuildState.ABORTED),
        (BuildState.PENDING, BuildState.ABORTED),
    }
)


@dataclass(frozen=True)
class CommitRef:
    """A specific commit in a specific repository."""

    repo_id: str
    sha: str
    branch: Optional[str] = None
    pr_number: Optional[int] = None

    def __post_init__(self) -> None:
        if not SHA_RE.match(self.sha):
            raise ModelError(f"sha must be 40 lowercase hex chars, got {self.sha!r}")
        if self.pr_number is not None and self.pr_number <= 0:
            raise ModelError(f"pr_number must be positive, got {self.pr_number}")


@dataclass(frozen=True)
class JobDefinition:
    """Declarative build job: trigger kind, platform, and version axis."""

    name: str
    trigger: TriggerKind
    platform: str
    versions: tuple[str, ...]
    pipeline_path: str = DEFAULT_PIPELINE_PATH
    watched_branches: tuple[str, ...] = DEFAULT_WATCHED_BRANCHES

    def __post_init__(self) -> None:
        if not self.name:
            raise ModelError("job name must be non-empty")
        if not self.versions:
            raise ModelError(f"job {self.name!r}: versions must be non-empty")
        if len(set(self.versions)) != len(self.versions):
            raise ModelError(f"job {self.name!r}: duplicate versions")


@dataclass(frozen=True)
class JobTable:
    """Ordered, name-unique collection of job definitions."""

    jobs: tuple[JobDefinition, ...]

    def __post_init__(self) -> None:
        names = [j.name for j in self.jobs]
        if len(set(names)) != len(names):
            raise ModelError("job names must be unique across the table")

    def __iter__(self):
        return iter(self.jobs)

    def get(self, name: str) -> Optional[JobDefinition]:
        for job in self.jobs:
            if job.name == name:
                return job
        return None

    @property
    def platforms(self) -> tuple[str, ...]:
        seen: list[str] = []
        for job in self.jobs:
            if job.platform not in seen:
                seen.append(job.platform)
        return tuple(seen)


@dataclass(frozen=True)
class Build:
    """One execution of one (job, platform, version, commit) matrix cell."""

    id: int
    job_name: str
    platform: str
    version: str
    commit: CommitRef
    state: BuildState = BuildState.PENDING
    exit_code: Optional[int] = None
    started: Optional[float] = None
    finished: Optional[float] = None
    log_ref: str = ""
    cause: Optional[str] = None

    def __post_init__(self) -> None:
        has_code = self.exit_code is not None
        if has_code != (self.state in (BuildState.SUCCESS, BuildState.FAILURE)):
            raise ModelError(
                f"build {self.id}: exit_code present iff state is Success/Failure "
                f"(state={self.state.value}, exit_code={self.exit_code})"
            )
        if self.state is BuildState.SUCCESS and self.exit_code != 0:
            raise ModelError(f"build {self.id}: Success requires exit_code 0")
        if self.state is BuildState.FAILURE and self.exit_code == 0:
            raise ModelError(f"build {self.id}: Failure requires nonzero exit_code")

    @property
    def duration_ms(self) -> Optional[int]:
        if self.started is None or self.finished is None:
            return None
        return max(0, round((self.finished - self.started) * 1000))

    def transition(self, state: BuildState, **changes) -> "Build":
        """Return a copy in the new state, enforcing the lifecycle graph."""
        if (self.state, state) not in ALLOWED_TRANSITIONS:
            raise ModelError(
                f"illegal transition {self.state.value} -> {state.value} for build {self.id}"
            )
        return replace(self, state=state, **changes)


@dataclass(frozen=True)
class TriggerGroup:
    """All builds spawned by one trigger event."""

    event_id: str
    cause: TriggerCause
    commit: CommitRef
    builds: tuple[int, ...]


@dataclass(frozen=True)
class TriggerEvent:
    """Normalized trigger: what happened, to which commit.

    ``job_name`` is set for manual triggers only and restricts expansion to
    that single job.
    """

    cause: TriggerCause
    commit: CommitRef
    job_name: Optional[str] = None

    def __post_init__(self) -> None:
        if self.cause is TriggerCause.BRANCH_PUSH and not self.commit.branch:
            raise ModelError("branch_push event requires commit.branch")
        if self.cause is TriggerCause.PR_UPDATE and self.commit.pr_number is None:
            raise ModelError("pr_update event requires commit.pr_number")


@dataclass(frozen=True)
class CompatibilityMatrix:
    """Declared-compatible (platform, runtime version, dependency, dependency
    version) tuples. Closed world: anything undeclared is incompatible."""

    entries: frozenset[tuple[str, str, str, str]] = frozenset()


@dataclass(frozen=True)
class SuiteSummary:
    """Counts reported by a test-suite run."""

    passed: int
    failed: int
    incomplete: int

    def __post_init__(self) -> None:
        if min(self.passed, self.failed, self.incomplete) < 0:
            raise ModelError("suite counts must be >= 0")


def default_job_table(
    repo: str = "COBRAToolbox",
    versions: Sequence[str] = ("R2014b", "R2015b", "R2016b", "R2017b"),
    stable_version: str = "R2016b",
    platforms: Sequence[str] = ("linux", "macOS", "windows7", "windows10"),
) -> JobTable:
    """The stock job table: branches-auto jobs run every version on every
    platform; pr-auto jobs run every version on linux but only the most
    stable version elsewhere; manual jobs exist on linux only."""
    all_versions = tuple(versions)
    jobs: list[JobDefinition] = []
    for p in platforms:
        jobs.append(JobDefinition(f"{repo}-branches-auto-{p}", TriggerKind.BRANCHES_AUTO, p, all_versions))
    for p in platforms:
        vers = all_versions if p == platforms[0] else (stable_version,)
        jobs.append(JobDefinition(f"{repo}-pr-auto-{p}", TriggerKind.PR_AUTO, p, vers))
    jobs.append(
        JobDefinition(f"{repo}-branches-manual-{platforms[0]}", TriggerKind.BRANCHES_MANUAL, platforms[0], all_versions)
    )
    jobs.append(
        JobDefinition(f"{repo}-pr-manual-{platforms[0]}", TriggerKind.PR_MANUAL, platforms[0], all_versions)
    )
    return JobTable(tuple(jobs))


def _job_matches(job: JobDefinition, event: TriggerEvent) -> bool:
    if event.cause is TriggerCause.BRANCH_PUSH:
        return (
            job.trigger is TriggerKind.BRANCHES_AUTO
            and event.commit.branch in job.watched_branches
        )
    if event.cause is TriggerCause.PR_UPDATE:
        return job.trigger is TriggerKind.PR_AUTO
    # Manual events match manual jobs only, optionally narrowed to one job.
    if not job.trigger.is_manual:
        return False
    return event.job_name is None or job.name == event.job_name


def expand_matrix(event: TriggerEvent, jobs: JobTable, start_id: int = 1) -> list[Build]:
    """Expand one trigger event into its Pending builds.

    Ordering is stable: job-table order, then each job's version order.
    Build ids are assigned consecutively from ``start_id``; passing the
    caller's counter keeps this a pure function. Non-matching events yield
    the empty list.
    """
    builds: list[Build] = []
    next_id = start_id
    for job in jobs:
        if not _job_matches(job, event):
            continue
        for version in job.versions:
            builds.append(
                Build(
                    id=next_id,
                    job_name=job.name,
                    platform=job.platform,
                    version=version,
                    commit=event.commit,
                )
            )
            next_id += 1
    return builds


def derive_exit(summary: SuiteSummary, crashed: bool) -> int:
    """Exit code of a suite run: 0 only for a clean, crash-free run with no
    failed and no incomplete tests; 1 otherwise."""
    if crashed or summary.failed != 0 or summary.incomplete != 0:
        return 1
    return 0


def is_compatible(
    matrix: CompatibilityMatrix,
    platform: str,
    runtime_version: str,
    dep_name: str,
    dep_version: str,
) -> bool:
    """True iff the exact tuple is declared compatible."""
    return (platform, runtime_version, dep_name, dep_version) in matrix.entries
