"""The experiment database: durable records plus the queries over them."""

from backend.registry import queries
from backend.registry.records import (
    ChallengeRecord,
    DatasetRecord,
    FlowRecord,
    FlowSpec,
    ParameterSetting,
    ParameterSpec,
    RunRecord,
    TaskRecord,
)
from backend.registry.store import Registration, Snapshot, Store, open_store

__all__ = [
    "ChallengeRecord",
    "DatasetRecord",
    "FlowRecord",
    "FlowSpec",
    "ParameterSetting",
    "ParameterSpec",
    "Registration",
    "RunRecord",
    "Snapshot",
    "Store",
    "TaskRecord",
    "open_store",
    "queries",
]
