"""Build record and log persistence.

The disk layout is append-only and human-inspectable: one directory per job
holding one JSON record per build plus its log as a flat file, group records
under ``groups/``, and JSON-line audit trails. Retention deletes old log
files but keeps every record.
"""

from __future__ import annotations

import json
import os
import threading

from ..model import Build, BuildState, CommitRef, TriggerCause, TriggerGroup


def build_to_dict(build: Build) -> dict:
    return {
        "id": build.id,
        "job_name": build.job_name,
        "platform": build.platform,
        "version": build.version,
        "repo_id": build.commit.repo_id,
        "sha": build.commit.sha,
        "branch": build.commit.branch,
        "pr_number": build.commit.pr_number,
        "state": build.state.value,
        "exit_code": build.exit_code,
        "started": build.started,
        "finished": build.finished,
        "duration_ms": build.duration_ms,
        "log_ref": build.log_ref,
        "cause": build.cause,
    }


def build_from_dict(record: dict) -> Build:
    return Build(
        id=record["id"],
        job_name=record["job_name"],
        platform=record["platform"],
        version=record["version"],
        commit=CommitRef(
            repo_id=record["repo_id"],
            sha=record["sha"],
            branch=record.get("branch"),
            pr_number=record.get("pr_number"),
        ),
        state=BuildState(record["state"]),
        exit_code=record.get("exit_code"),
        started=record.get("started"),
        finished=record.get("finished"),
        log_ref=record.get("log_ref", ""),
        cause=record.get("cause"),
    )


def group_to_dict(group: TriggerGroup) -> dict:
    return {
        "event_id": group.event_id,
        "cause": group.cause.value,
        "repo_id": group.commit.repo_id,
        "sha": group.commit.sha,
        "branch": group.commit.branch,
        "pr_number": group.commit.pr_number,
        "builds": list(group.builds),
    }


def group_from_dict(record: dict) -> TriggerGroup:
    return TriggerGroup(
        event_id=record["event_id"],
        cause=TriggerCause(record["cause"]),
        commit=CommitRef(
            repo_id=record["repo_id"],
            sha=record["sha"],
            branch=record.get("branch"),
            pr_number=record.get("pr_number"),
        ),
        builds=tuple(record["builds"]),
    )


class MemoryStore:
    """Store double for core tests; same surface as DiskStore."""

    def __init__(self) -> None:
        self.builds: dict[int, dict] = {}
        self.groups: dict[str, dict] = {}
        self.logs: dict[str, bytearray] = {}
        self.audit: list[dict] = []

    def save_build(self, build: Build) -> None:
        self.builds[build.id] = build_to_dict(build)

    def load_builds(self) -> list[Build]:
        return [build_from_dict(r) for r in sorted(self.builds.values(), key=lambda r: r["id"])]

    def save_group(self, group: TriggerGroup) -> None:
        self.groups[group.event_id] = group_to_dict(group)

    def load_groups(self) -> list[TriggerGroup]:
        return [group_from_dict(r) for r in self.groups.values()]

    def append_log(self, log_ref: str, data: bytes) -> None:
        self.logs.setdefault(log_ref, bytearray()).extend(data)

    def read_log(self, log_ref: str, offset: int = 0) -> bytes:
        return bytes(self.logs.get(log_ref, bytearray())[offset:])

    def log_size(self, log_ref: str) -> int:
        return len(self.logs.get(log_ref, b""))

    def has_log(self, log_ref: str) -> bool:
        return log_ref in self.logs

    def delete_log(self, log_ref: str) -> bool:
        return self.logs.pop(log_ref, None) is not None

    def append_audit(self, record: dict) -> None:
        self.audit.append(record)


class DiskStore:
    def __init__(self, root: str) -> None:
        self.root = root
        self._lock = threading.Lock()
        os.makedirs(os.path.join(root, "jobs"), exist_ok=True)
        os.makedirs(os.path.join(root, "groups"), exist_ok=True)

    def _record_path(self, job_name: str, build_id: int) -> str:
        return os.path.join(self.root, "jobs", job_name, f"{build_id}.json")

    def _log_path(self, log_ref: str) -> str:
        return os.path.join(self.root, "jobs", log_ref)

    def save_build(self, build: Build) -> None:
        path = self._record_path(build.job_name, build.id)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with self._lock:
            tmp = path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(build_to_dict(build), fh, sort_keys=True)
            os.replace(tmp, path)

    def load_builds(self) -> list[Build]:
        builds = []
        jobs_dir = os.path.join(self.root, "jobs")
        for job_name in sorted(os.listdir(jobs_dir)):
            job_dir = os.path.join(jobs_dir, job_name)
            if not os.path.isdir(job_dir):
                continue
            for name in os.listdir(job_dir):
                if not name.endswith(".json"):
                    continue
                with open(os.path.join(job_dir, name), "r", encoding="utf-8") as fh:
                    builds.append(build_from_dict(json.load(fh)))
        builds.sort(key=lambda b: b.id)
        return builds

    def save_group(self, group: TriggerGroup) -> None:
        path = os.path.join(self.root, "groups", f"{group.event_id}.json")
        with self._lock:
            tmp = path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(group_to_dict(group), fh, sort_keys=True)
            os.replace(tmp, path)

    def load_groups(self) -> list[TriggerGroup]:
        groups = []
        groups_dir = os.path.join(self.root, "groups")
        for name in sorted(os.listdir(groups_dir)):
            if not name.endswith(".json"):
                continue
            with open(os.path.join(groups_dir, name), "r", encoding="utf-8") as fh:
                groups.append(group_from_dict(json.load(fh)))
        return groups

    def append_log(self, log_ref: str, data: bytes) -> None:
        path = self._log_path(log_ref)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "ab") as fh:
            fh.write(data)

    def read_log(self, log_ref: str, offset: int = 0) -> bytes:
        path = self._log_path(log_ref)
        try:
            with open(path, "rb") as fh:
                if offset:
                    fh.seek(offset)
                return fh.read()
        except OSError:
            return b""

    def log_size(self, log_ref: str) -> int:
        try:
            return os.path.getsize(self._log_path(log_ref))
        except OSError:
            return 0

    def has_log(self, log_ref: str) -> bool:
        return os.path.exists(self._log_path(log_ref))

    def delete_log(self, log_ref: str) -> bool:
        try:
            os.unlink(self._log_path(log_ref))
            return True
        except OSError:
            return False

    def append_audit(self, record: dict) -> None:
        with self._lock:
            with open(os.path.join(self.root, "audit.jsonl"), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
