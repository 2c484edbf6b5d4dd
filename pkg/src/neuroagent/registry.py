"""Tool manifests, modality-aware routing, and backend fan-out.

A tool is a declarative manifest naming the task it serves, the modalities it
needs, and the collaborating model backends behind it. Backends are either
HTTP prediction servers (POST {endpoint}/predict) or in-process mocks
addressed by "mock:" endpoints.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from .domain import (
    ClassDistribution,
    DomainError,
    Modality,
    ModelOutcome,
    OutcomeStatus,
    ScanRef,
    TaskKind,
    ToolOutcome,
    label_space,
)

DEFAULT_TIMEOUT_MS = 30_000
MOCK_PREFIX = "mock:"

MockBackendFn = Callable[[TaskKind, Mapping[Modality, ScanRef]], ClassDistribution]


class RegistryError(Exception):
    code = "RegistryError"


class DuplicateToolIdError(RegistryError):
    code = "DuplicateToolId"


class NoApplicableToolError(RegistryError):
    code = "NoApplicableTool"


class AllBackendsFailedError(RegistryError):
    """No backend of the invoked tool produced an Ok outcome."""

    code = "AllBackendsFailed"

    def __init__(self, message: str, tool_outcome: ToolOutcome):
        super().__init__(message)
        self.tool_outcome = tool_outcome


@dataclass(frozen=True)
class ModelBackendRef:
    model_id: str
    endpoint: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise DomainError("timeout_ms must be positive")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "endpoint": self.endpoint,
            "timeout_ms": self.timeout_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelBackendRef":
        return cls(
            model_id=data["model_id"],
            endpoint=data["endpoint"],
            timeout_ms=int(data.get("timeout_ms", DEFAULT_TIMEOUT_MS)),
        )


@dataclass(frozen=True)
class ToolManifest:
    """Declarative tool description; registering one is all integration takes."""

    tool_id: str
    task: TaskKind
    required_modalities: frozenset[Modality]
    backends: tuple[ModelBackendRef, ...]
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_modalities", frozenset(self.required_modalities))
        object.__setattr__(self, "backends", tuple(self.backends))
        if not self.backends:
            raise DomainError(f"tool {self.tool_id!r} requires at least one backend")
        if not self.required_modalities:
            raise DomainError(f"tool {self.tool_id!r} requires at least one modality")

    def to_dict(self) -> dict:
        return {
            "tool_id": self.tool_id,
            "task": self.task.value,
            "required_modalities": sorted(m.value for m in self.required_modalities),
            "description": self.description,
            "backends": [b.to_dict() for b in self.backends],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ToolManifest":
        return cls(
            tool_id=data["tool_id"],
            task=TaskKind(data["task"]),
            required_modalities=frozenset(Modality(m) for m in data["required_modalities"]),
            backends=tuple(ModelBackendRef.from_dict(b) for b in data["backends"]),
            description=data.get("description", ""),
        )


def _fixed_distribution(spec: str, task: TaskKind) -> ClassDistribution:
    probs = tuple(float(p) for p in spec.split(","))
    return ClassDistribution(task, probs)


@dataclass
class ToolRegistry:
    """Holds manifests; resolution prefers the most specific applicable tool."""

    _tools: dict[str, ToolManifest] = field(default_factory=dict)
    _mock_backends: dict[str, MockBackendFn] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def register_tool(self, manifest: ToolManifest) -> None:
        with self._lock:
            if manifest.tool_id in self._tools:
                raise DuplicateToolIdError(f"tool {manifest.tool_id!r} already registered")
            self._tools[manifest.tool_id] = manifest

    def register_mock_backend(self, tag: str, fn: MockBackendFn) -> None:
        with self._lock:
            self._mock_backends[tag] = fn

    def get(self, tool_id: str) -> ToolManifest:
        return self._tools[tool_id]

    def manifests(self) -> list[ToolManifest]:
        return sorted(self._tools.values(), key=lambda m: m.tool_id)

    def resolve_tools(self, task: TaskKind, available: frozenset[Modality]) -> list[str]:
        """All applicable tool ids, most-specific first (then tool_id).

        A tool applies when its task matches and its required modalities are a
        subset of what the session has. The engine invokes the first entry.
        """
        matches = [
            m
            for m in self._tools.values()
            if m.task is task and m.required_modalities <= available
        ]
        matches.sort(key=lambda m: (-len(m.required_modalities), m.tool_id))
        if not matches:
            raise NoApplicableToolError(
                f"no registered tool serves task={task.value} "
                f"with modalities {{{', '.join(sorted(m.value for m in available))}}}"
            )
        return [m.tool_id for m in matches]

    def invoke_tool(
        self, manifest: ToolManifest, inputs: Mapping[Modality, ScanRef]
    ) -> ToolOutcome:
        """Invoke every backend (concurrently) and assemble outcomes in manifest order.

        Individual backend failures become Failed outcomes; only a fully failed
        fan-out raises AllBackendsFailedError (which carries the ToolOutcome).
        """
        missing = manifest.required_modalities - set(inputs)
        if missing:
            raise ValueError(
                f"tool {manifest.tool_id!r} is missing inputs: {sorted(m.value for m in missing)}"
            )
        for ref in inputs.values():
            if not ref.validated:
                raise ValueError(f"scan {ref.id!r} has not been validated")

        with ThreadPoolExecutor(max_workers=len(manifest.backends)) as pool:
            outcomes = tuple(
                pool.map(lambda b: self._call_backend(b, manifest.task, inputs), manifest.backends)
            )
        result = ToolOutcome(tool_id=manifest.tool_id, task=manifest.task, outcomes=outcomes)
        if not result.ok_outcomes:
            raise AllBackendsFailedError(
                f"all {len(outcomes)} backends of {manifest.tool_id!r} failed", result
            )
        return result

    def _call_backend(
        self, backend: ModelBackendRef, task: TaskKind, inputs: Mapping[Modality, ScanRef]
    ) -> ModelOutcome:
        if backend.endpoint.startswith(MOCK_PREFIX):
            return self._call_mock(backend, task, inputs)
        return _call_http(backend, task, inputs)

    def _call_mock(
        self, backend: ModelBackendRef, task: TaskKind, inputs: Mapping[Modality, ScanRef]
    ) -> ModelOutcome:
        # Mocks report latency 0 so episode traces stay byte-stable.
        tag = backend.endpoint[len(MOCK_PREFIX):]
        try:
            if tag.startswith("fixed:"):
                dist = _fixed_distribution(tag[len("fixed:"):], task)
            else:
                fn = self._mock_backends[tag]
                dist = fn(task, inputs)
        except KeyError:
            return ModelOutcome(
                backend.model_id, None, 0, OutcomeStatus.FAILED,
                reason=f"unknown mock backend tag {tag!r}",
            )
        except (DomainError, ValueError) as exc:
            return ModelOutcome(
                backend.model_id, None, 0, OutcomeStatus.FAILED, reason=str(exc)
            )
        return ModelOutcome(backend.model_id, dist, 0, OutcomeStatus.OK)


def _call_http(
    backend: ModelBackendRef, task: TaskKind, inputs: Mapping[Modality, ScanRef]
) -> ModelOutcome:
    body = {
        "task": task.value,
        "inputs": {m.value: ref.source_uri for m, ref in sorted(inputs.items())},
    }
    started = time.monotonic()
    try:
        resp = httpx.post(
            backend.endpoint.rstrip("/") + "/predict",
            json=body,
            timeout=backend.timeout_ms / 1000,
        )
        resp.raise_for_status()
        payload = resp.json()
    except httpx.TimeoutException:
        return ModelOutcome(
            backend.model_id, None, _elapsed_ms(started), OutcomeStatus.FAILED,
            reason=f"timeout after {backend.timeout_ms} ms",
        )
    except (httpx.HTTPError, ValueError) as exc:
        return ModelOutcome(
            backend.model_id, None, _elapsed_ms(started), OutcomeStatus.FAILED,
            reason=f"backend unreachable or invalid: {type(exc).__name__}",
        )

    latency = _elapsed_ms(started)
    space = label_space(task)
    try:
        if list(payload["labels"]) != list(space.labels):
            raise ValueError(
                f"labels {payload['labels']!r} do not match {list(space.labels)!r}"
            )
        if "model_id" not in payload:
            raise ValueError("response lacks model_id")
        dist = ClassDistribution(task, tuple(payload["probabilities"]))
    except (KeyError, TypeError, DomainError, ValueError) as exc:
        return ModelOutcome(
            backend.model_id, None, latency, OutcomeStatus.FAILED,
            reason=f"protocol error: {exc}",
        )
    return ModelOutcome(backend.model_id, dist, latency, OutcomeStatus.OK)


def _elapsed_ms(started: float) -> int:
    return int((time.monotonic() - started) * 1000)


def load_manifests(path: str | Path) -> list[ToolManifest]:
    """Read a declarative manifest file ({"tools": [...]}) into ToolManifests."""
    data = json.loads(Path(path).read_text())
    return [ToolManifest.from_dict(t) for t in data["tools"]]


def registry_from_manifests(manifests: Sequence[ToolManifest]) -> ToolRegistry:
    registry = ToolRegistry()
    for manifest in manifests:
        registry.register_tool(manifest)
    return registry
