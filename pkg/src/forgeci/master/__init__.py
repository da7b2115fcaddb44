"""The orchestrating service: config, persistence, the scheduler state
machine, and the network servers binding it to agents and HTTP clients."""

from .config import AgentEntry, ConfigInvalid, MasterConfig, load_master_config, parse_master_config
from .core import (
    AgentState,
    BadSha,
    BadSignature,
    Ignored,
    MalformedPayload,
    MasterCore,
    MasterError,
    NoSuchJob,
    NotManuallyTriggerable,
    NotRunning,
    TrendSeries,
    UnknownBuild,
    WebhookEvent,
)
from .store import DiskStore, MemoryStore

__all__ = [
    "AgentEntry",
    "AgentState",
    "BadSha",
    "BadSignature",
    "ConfigInvalid",
    "DiskStore",
    "Ignored",
    "MalformedPayload",
    "MasterConfig",
    "MasterCore",
    "MasterError",
    "MemoryStore",
    "NoSuchJob",
    "NotManuallyTriggerable",
    "NotRunning",
    "TrendSeries",
    "UnknownBuild",
    "WebhookEvent",
    "load_master_config",
    "parse_master_config",
]
