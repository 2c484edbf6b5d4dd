"""Shared domain types: tasks, label spaces, scans, outcomes, decisions, traces.

All types are immutable value objects (except SessionState, whose mutation is
owned by the gateway) and carry a canonical JSON form with lower_snake_case
field names via ``to_dict`` / ``from_dict``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

PROB_SUM_TOL = 1e-9


class DomainError(ValueError):
    """An invariant of a domain type was violated at construction time."""


class Modality(str, Enum):
    MRI = "mri"
    PET = "pet"


class TaskKind(str, Enum):
    DIAGNOSIS = "diagnosis"
    PROGNOSIS = "prognosis"


class Stage(str, Enum):
    OBSERVATION = "observation"
    THOUGHT = "thought"
    ACTION = "action"
    COORDINATION = "coordination"


class StrategyKind(str, Enum):
    AVERAGE = "average"
    VOTE = "vote"
    LLM_COORDINATED = "llm_coordinated"


class OutcomeStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


DIAGNOSIS_LABELS = ("CN", "MCI", "AD")
PROGNOSIS_LABELS = ("Stable", "Converter")


@dataclass(frozen=True)
class LabelSpace:
    """Ordered class vocabulary of one task (severity order, index = wire code)."""

    task: TaskKind
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        expected = DIAGNOSIS_LABELS if self.task is TaskKind.DIAGNOSIS else PROGNOSIS_LABELS
        if tuple(self.labels) != expected:
            raise DomainError(f"label space for {self.task.value} must be {expected}")

    def __len__(self) -> int:
        return len(self.labels)

    def name_of(self, index: int) -> str:
        if not 0 <= index < len(self.labels):
            raise DomainError(f"label index {index} out of range for {self.task.value}")
        return self.labels[index]

    def index_of(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise DomainError(f"unknown label {name!r} for {self.task.value}") from None

    def match(self, text: str) -> int | None:
        """Case-insensitive label lookup; None when no label matches."""
        lowered = text.strip().lower()
        for i, label in enumerate(self.labels):
            if label.lower() == lowered:
                return i
        return None

    def to_dict(self) -> dict[str, Any]:
        return {"task": self.task.value, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LabelSpace":
        return cls(task=TaskKind(data["task"]), labels=tuple(data["labels"]))


DIAGNOSIS_SPACE = LabelSpace(TaskKind.DIAGNOSIS, DIAGNOSIS_LABELS)
PROGNOSIS_SPACE = LabelSpace(TaskKind.PROGNOSIS, PROGNOSIS_LABELS)


def label_space(task: TaskKind) -> LabelSpace:
    return DIAGNOSIS_SPACE if task is TaskKind.DIAGNOSIS else PROGNOSIS_SPACE


@dataclass(frozen=True)
class ClassDistribution:
    """Probability vector over a task's label space; must sum to 1 within 1e-9."""

    task: TaskKind
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        n = len(label_space(self.task))
        if len(probs) != n:
            raise DomainError(f"{self.task.value} distribution needs {n} entries, got {len(probs)}")
        for p in probs:
            if not (0.0 <= p <= 1.0 + PROB_SUM_TOL):
                raise DomainError(f"probability {p} outside [0, 1]")
        total = sum(probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise DomainError(f"probabilities sum to {total!r}, expected 1 within {PROB_SUM_TOL}")

    def argmax(self) -> int:
        """Index of the largest probability; ties go to the lowest index."""
        return max(range(len(self.probs)), key=lambda i: (self.probs[i], -i))

    def to_dict(self) -> dict[str, Any]:
        return {"task": self.task.value, "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ClassDistribution":
        return cls(task=TaskKind(data["task"]), probs=tuple(data["probs"]))


@dataclass(frozen=True)
class ScanRef:
    """Metadata handle for one uploaded scan; never carries voxel data.

    ``validated`` is set only by the NIfTI validation path.
    """

    id: str
    modality: Modality
    source_uri: str
    dims: tuple[int, int, int]
    datatype_code: int
    validated: bool

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise DomainError(f"dims must be three integers >= 1, got {dims}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "modality": self.modality.value,
            "source_uri": self.source_uri,
            "dims": list(self.dims),
            "datatype_code": self.datatype_code,
            "validated": self.validated,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScanRef":
        return cls(
            id=data["id"],
            modality=Modality(data["modality"]),
            source_uri=data["source_uri"],
            dims=tuple(data["dims"]),
            datatype_code=int(data["datatype_code"]),
            validated=bool(data["validated"]),
        )


@dataclass(frozen=True)
class Query:
    session_id: str
    text: str
    attached_scans: tuple[ScanRef, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise DomainError("query text must be non-empty")
        object.__setattr__(self, "attached_scans", tuple(self.attached_scans))

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "text": self.text,
            "attached_scans": [s.to_dict() for s in self.attached_scans],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Query":
        return cls(
            session_id=data["session_id"],
            text=data["text"],
            attached_scans=tuple(ScanRef.from_dict(s) for s in data.get("attached_scans", [])),
        )


@dataclass(frozen=True)
class ModelOutcome:
    """Result of one backend model call; distribution present iff status is ok."""

    model_id: str
    distribution: ClassDistribution | None
    latency_ms: int = 0
    status: OutcomeStatus = OutcomeStatus.OK
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise DomainError("latency_ms must be non-negative")
        if self.status is OutcomeStatus.OK:
            if self.distribution is None:
                raise DomainError("ok outcome requires a distribution")
        else:
            if self.distribution is not None:
                raise DomainError("failed outcome must not carry a distribution")
            if not self.reason:
                raise DomainError("failed outcome requires a reason")

    @property
    def ok(self) -> bool:
        return self.status is OutcomeStatus.OK

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "distribution": self.distribution.to_dict() if self.distribution else None,
            "latency_ms": self.latency_ms,
            "status": self.status.value,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelOutcome":
        dist = data.get("distribution")
        return cls(
            model_id=data["model_id"],
            distribution=ClassDistribution.from_dict(dist) if dist else None,
            latency_ms=int(data.get("latency_ms", 0)),
            status=OutcomeStatus(data.get("status", "ok")),
            reason=data.get("reason"),
        )


@dataclass(frozen=True)
class ToolOutcome:
    """All model outcomes of one tool invocation, in manifest backend order."""

    tool_id: str
    task: TaskKind
    outcomes: tuple[ModelOutcome, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if not self.outcomes:
            raise DomainError("tool outcome requires at least one model outcome")
        for o in self.outcomes:
            if o.ok and o.distribution.task is not self.task:
                raise DomainError(
                    f"model {o.model_id} answered for {o.distribution.task.value}, tool task is {self.task.value}"
                )

    @property
    def ok_outcomes(self) -> tuple[ModelOutcome, ...]:
        return tuple(o for o in self.outcomes if o.ok)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool_id": self.tool_id,
            "task": self.task.value,
            "outcomes": [o.to_dict() for o in self.outcomes],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToolOutcome":
        return cls(
            tool_id=data["tool_id"],
            task=TaskKind(data["task"]),
            outcomes=tuple(ModelOutcome.from_dict(o) for o in data["outcomes"]),
        )


@dataclass(frozen=True)
class Decision:
    """Coordinated label for one task, with the strategy that produced it."""

    task: TaskKind
    label_index: int
    label_name: str
    aggregate_probs: ClassDistribution | None
    strategy: StrategyKind
    rationale: str

    def __post_init__(self) -> None:
        space = label_space(self.task)
        if not 0 <= self.label_index < len(space):
            raise DomainError(f"label index {self.label_index} out of range for {self.task.value}")
        if self.label_name != space.name_of(self.label_index):
            raise DomainError(
                f"label name {self.label_name!r} does not match index {self.label_index}"
            )
        if self.aggregate_probs is not None and self.aggregate_probs.task is not self.task:
            raise DomainError("aggregate_probs task does not match decision task")

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": self.task.value,
            "label_index": self.label_index,
            "label_name": self.label_name,
            "aggregate_probs": self.aggregate_probs.to_dict() if self.aggregate_probs else None,
            "strategy": self.strategy.value,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Decision":
        agg = data.get("aggregate_probs")
        return cls(
            task=TaskKind(data["task"]),
            label_index=int(data["label_index"]),
            label_name=data["label_name"],
            aggregate_probs=ClassDistribution.from_dict(agg) if agg else None,
            strategy=StrategyKind(data["strategy"]),
            rationale=data["rationale"],
        )


@dataclass(frozen=True)
class ResponseError:
    """Structured failure attached to a response instead of a decision."""

    code: str
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ResponseError":
        return cls(code=data["code"], message=data["message"])


@dataclass(frozen=True)
class AgentResponse:
    """Final reply for one query: a decision plus narrative, or a structured failure."""

    decision: Decision | None
    narrative: str
    contributing_tools: tuple[str, ...] = ()
    error: ResponseError | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "contributing_tools", tuple(self.contributing_tools))
        if self.decision is not None and not self.contributing_tools:
            raise DomainError("successful response requires contributing tools")
        if self.decision is not None and self.error is not None:
            raise DomainError("response cannot carry both a decision and an error")

    def to_dict(self) -> dict[str, Any]:
        return {
            "decision": self.decision.to_dict() if self.decision else None,
            "narrative": self.narrative,
            "contributing_tools": list(self.contributing_tools),
            "error": self.error.to_dict() if self.error else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AgentResponse":
        decision = data.get("decision")
        error = data.get("error")
        return cls(
            decision=Decision.from_dict(decision) if decision else None,
            narrative=data["narrative"],
            contributing_tools=tuple(data.get("contributing_tools", [])),
            error=ResponseError.from_dict(error) if error else None,
        )


@dataclass(frozen=True)
class TraceEvent:
    """One step of an episode; seq is unique and strictly increasing per session."""

    seq: int
    stage: Stage
    payload: dict[str, Any]
    timestamp: float

    def __post_init__(self) -> None:
        if self.seq < 1:
            raise DomainError("trace seq starts at 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "stage": self.stage.value,
            "payload": self.payload,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TraceEvent":
        return cls(
            seq=int(data["seq"]),
            stage=Stage(data["stage"]),
            payload=dict(data["payload"]),
            timestamp=float(data["timestamp"]),
        )


@dataclass
class SessionState:
    """Accumulated scans, history and trace of one conversation.

    At most one scan per modality (re-upload replaces); the trace is
    append-only with strictly increasing seq.
    """

    session_id: str
    scans: dict[Modality, ScanRef] = field(default_factory=dict)
    history: list[tuple[Query, AgentResponse]] = field(default_factory=list)
    trace: list[TraceEvent] = field(default_factory=list)

    def put_scan(self, ref: ScanRef) -> None:
        self.scans[ref.modality] = ref

    @property
    def available_modalities(self) -> frozenset[Modality]:
        return frozenset(self.scans)

    @property
    def next_seq(self) -> int:
        return self.trace[-1].seq + 1 if self.trace else 1

    def append_event(self, event: TraceEvent) -> None:
        if self.trace and event.seq <= self.trace[-1].seq:
            raise DomainError(
                f"trace seq must increase: got {event.seq} after {self.trace[-1].seq}"
            )
        self.trace.append(event)

    def add_exchange(self, query: Query, response: AgentResponse) -> None:
        self.history.append((query, response))

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "scans": {m.value: ref.to_dict() for m, ref in sorted(self.scans.items())},
            "history": [
                {"query": q.to_dict(), "response": r.to_dict()} for q, r in self.history
            ],
            "trace": [e.to_dict() for e in self.trace],
        }
