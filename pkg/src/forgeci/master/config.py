"""Master configuration: the job table, agent roster, compatibility matrix,
and service settings, loaded from a file in the pipeline block dialect.

Sequence entries use space-separated fields, e.g.::

    jobs:
      - COBRAToolbox-pr-auto-macOS pr_auto macOS R2016b
    agents:
      - mac-agent macOS
    compatibility:
      - linux R2016b solverA 1.0
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Optional

from ..model import (
    CompatibilityMatrix,
    JobDefinition,
    JobTable,
    ModelError,
    TriggerKind,
)
from ..pipeline import PipelineError, parse_document
from ..protocol import DEFAULT_AGENT_PORT

DEFAULT_HTTP_PORT = 8080
DEFAULT_RETENTION = 30
DEFAULT_MAINTENANCE_TIME = "03:00"
DEFAULT_HEARTBEAT_TIMEOUT = 30.0

_TIME_RE = re.compile(r"^([01]?\d|2[0-3]):([0-5]\d)$")

KNOWN_KEYS = {
    "port",
    "agent_port",
    "bot_account",
    "secret_path",
    "retention",
    "maintenance_time",
    "repo_path",
    "data_dir",
    "badge_branch",
    "base_url",
    "heartbeat_timeout",
    "ui_dir",
    "admins",
    "versions",
    "agents",
    "jobs",
    "compatibility",
}


class ConfigInvalid(ValueError):
    """The config file cannot be used; the previous one stays active."""


@dataclass(frozen=True)
class AgentEntry:
    name: str
    platform: str


@dataclass(frozen=True)
class MasterConfig:
    port: int
    agent_port: int
    bot_account: str
    secret: str
    retention: int
    maintenance_time: tuple[int, int]  # (hour, minute), local time
    repo_path: str
    data_dir: str
    jobs: JobTable
    compatibility: CompatibilityMatrix
    agents: tuple[AgentEntry, ...]
    versions: tuple[str, ...]
    admins: tuple[str, ...] = ()
    badge_branch: str = "develop"
    base_url: str = ""
    heartbeat_timeout: float = DEFAULT_HEARTBEAT_TIMEOUT
    ui_dir: str = ""

    @property
    def platforms(self) -> set[str]:
        return {a.platform for a in self.agents}

    def url(self) -> str:
        return self.base_url or f"http://127.0.0.1:{self.port}"


def _parse_job(item: str, declared_versions: tuple[str, ...]) -> JobDefinition:
    fields = item.split()
    if len(fields) < 4:
        raise ConfigInvalid(
            f"job entry needs 'name trigger platform v1,v2,...', got {item!r}"
        )
    name, trigger_raw, platform, versions_raw = fields[:4]
    try:
        trigger = TriggerKind(trigger_raw)
    except ValueError:
        raise ConfigInvalid(f"job {name!r}: unknown trigger {trigger_raw!r}") from None
    versions = tuple(v for v in versions_raw.split(",") if v)
    for v in versions:
        if declared_versions and v not in declared_versions:
            raise ConfigInvalid(f"job {name!r}: version {v!r} not in declared versions list")
    pipeline_path = "travis.yml"
    watched = ("develop", "master")
    for extra in fields[4:]:
        if extra.startswith("pipeline="):
            pipeline_path = extra.split("=", 1)[1]
        elif extra.startswith("branches="):
            watched = tuple(b for b in extra.split("=", 1)[1].split(",") if b)
        else:
            raise ConfigInvalid(f"job {name!r}: unknown field {extra!r}")
    if declared_versions:
        versions = tuple(sorted(versions, key=declared_versions.index))
    try:
        return JobDefinition(
            name=name,
            trigger=trigger,
            platform=platform,
            versions=versions,
            pipeline_path=pipeline_path,
            watched_branches=watched,
        )
    except ModelError as exc:
        raise ConfigInvalid(str(exc)) from exc


def parse_master_config(text: str, config_dir: str = ".") -> MasterConfig:
    """Parse and validate config text; any defect raises ConfigInvalid."""
    try:
        entries = parse_document(text)
    except PipelineError as exc:
        raise ConfigInvalid(f"unparseable config: {exc}") from exc

    for key in entries:
        if key not in KNOWN_KEYS:
            raise ConfigInvalid(f"unknown config key {key!r}")

    def scalar(key: str, default: Optional[str] = None) -> Optional[str]:
        value = entries.get(key, default)
        if isinstance(value, list):
            raise ConfigInvalid(f"config key {key!r} must be a scalar")
        return value

    def sequence(key: str) -> list[str]:
        value = entries.get(key, [])
        if isinstance(value, str):
            raise ConfigInvalid(f"config key {key!r} must be a sequence")
        return value

    try:
        port = int(scalar("port", str(DEFAULT_HTTP_PORT)))
        agent_port = int(scalar("agent_port", str(DEFAULT_AGENT_PORT)))
        retention = int(scalar("retention", str(DEFAULT_RETENTION)))
        heartbeat_timeout = float(scalar("heartbeat_timeout", str(DEFAULT_HEARTBEAT_TIMEOUT)))
    except ValueError as exc:
        raise ConfigInvalid(f"bad numeric value: {exc}") from exc
    if retention < 1:
        raise ConfigInvalid("retention must be >= 1")

    time_raw = scalar("maintenance_time", DEFAULT_MAINTENANCE_TIME)
    m = _TIME_RE.match(time_raw)
    if not m:
        raise ConfigInvalid(f"maintenance_time must be HH:MM, got {time_raw!r}")
    maintenance_time = (int(m.group(1)), int(m.group(2)))

    secret_path = scalar("secret_path", "")
    secret = ""
    if secret_path:
        resolved = os.path.join(config_dir, secret_path)
        try:
            with open(resolved, "r", encoding="utf-8") as fh:
                secret = fh.read().strip()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read secret file {resolved!r}: {exc}") from exc

    versions = tuple(sequence("versions"))

    agents = []
    for item in sequence("agents"):
        fields = item.split()
        if len(fields) != 2:
            raise ConfigInvalid(f"agent entry needs 'name platform', got {item!r}")
        agents.append(AgentEntry(name=fields[0], platform=fields[1]))
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise ConfigInvalid("agent names must be unique")

    jobs = [_parse_job(item, versions) for item in sequence("jobs")]
    try:
        job_table = JobTable(tuple(jobs))
    except ModelError as exc:
        raise ConfigInvalid(str(exc)) from exc

    compat = set()
    for item in sequence("compatibility"):
        fields = item.split()
        if len(fields) != 4:
            raise ConfigInvalid(
                f"compatibility entry needs 'platform version dep depversion', got {item!r}"
            )
        compat.add(tuple(fields))

    return MasterConfig(
        port=port,
        agent_port=agent_port,
        bot_account=scalar("bot_account", ""),
        secret=secret,
        retention=retention,
        maintenance_time=maintenance_time,
        repo_path=os.path.join(config_dir, scalar("repo_path", "repo")),
        data_dir=os.path.join(config_dir, scalar("data_dir", "data")),
        jobs=job_table,
        compatibility=CompatibilityMatrix(frozenset(compat)),
        agents=tuple(agents),
        versions=versions,
        admins=tuple(sequence("admins")),
        badge_branch=scalar("badge_branch", "develop"),
        base_url=scalar("base_url", ""),
        heartbeat_timeout=heartbeat_timeout,
        ui_dir=scalar("ui_dir", ""),
    )


def load_master_config(path: str) -> MasterConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path!r}: {exc}") from exc
    return parse_master_config(text, config_dir=os.path.dirname(os.path.abspath(path)))
