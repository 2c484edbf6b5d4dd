"""Agent orchestration engine and gateway for multi-model Alzheimer's
diagnosis and prognosis tools."""

from .domain import (
    AgentResponse,
    ClassDistribution,
    Decision,
    Modality,
    ModelOutcome,
    Query,
    ScanRef,
    SessionState,
    Stage,
    StrategyKind,
    TaskKind,
    ToolOutcome,
    TraceEvent,
    label_space,
)

__version__ = "0.1.0"

__all__ = [
    "AgentResponse",
    "ClassDistribution",
    "Decision",
    "Modality",
    "ModelOutcome",
    "Query",
    "ScanRef",
    "SessionState",
    "Stage",
    "StrategyKind",
    "TaskKind",
    "ToolOutcome",
    "TraceEvent",
    "label_space",
    "__version__",
]
