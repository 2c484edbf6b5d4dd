"""Chat-completion backends: a remote HTTP client plus deterministic test doubles.

The remote backend speaks the de-facto standard chat-completion JSON protocol,
so any compatible hosted or local model can serve as the reasoning LLM.
Scripted and Rule backends keep the test suite hermetic.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import httpx

DEFAULT_TIMEOUT_MS = 60_000
DEFAULT_MAX_IN_FLIGHT = 4

ENDPOINT_ENV = "NEUROAGENT_LLM_ENDPOINT"
MODEL_ENV = "NEUROAGENT_LLM_MODEL"
API_KEY_ENV = "NEUROAGENT_LLM_API_KEY"


class LlmError(Exception):
    code = "LlmError"


class BackendUnreachableError(LlmError):
    code = "BackendUnreachable"


class MalformedBackendReplyError(LlmError):
    code = "MalformedBackendReply"


class TranscriptExhaustedError(LlmError):
    """A Scripted transcript was over-consumed — a test bug, not a runtime state."""

    code = "TranscriptExhausted"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if self.role in (Role.SYSTEM, Role.USER) and not self.content:
            raise ValueError(f"{self.role.value} message content must be non-empty")


def _check_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[0].role is not Role.SYSTEM:
        raise ValueError("first message must have the system role")


class LlmBackend:
    """Minimal chat interface: a list of messages in, one assistant text out."""

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        raise NotImplementedError


class ScriptedBackend(LlmBackend):
    """Replays a fixed transcript of assistant replies, in order."""

    def __init__(self, transcript: Sequence[str]):
        self._transcript = list(transcript)
        self._next = 0
        self._lock = threading.Lock()

    @property
    def consumed(self) -> int:
        return self._next

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _check_messages(messages)
        with self._lock:
            if self._next >= len(self._transcript):
                raise TranscriptExhaustedError(
                    f"scripted transcript of {len(self._transcript)} replies over-consumed"
                )
            reply = self._transcript[self._next]
            self._next += 1
            return reply


def _parse_outcome_table(prompt: str) -> tuple[list[str], list[tuple[str, list[float]]]]:
    """Extract (labels, [(model_id, probs)]) from a coordinator prompt table."""
    labels: list[str] = []
    rows: list[tuple[str, list[float]]] = []
    for line in prompt.splitlines():
        if "|" not in line:
            continue
        cells = [c.strip() for c in line.split("|")]
        if cells[0] == "model_id":
            labels = cells[1:]
            continue
        if labels and len(cells) == len(labels) + 1:
            try:
                rows.append((cells[0], [float(c) for c in cells[1:]]))
            except ValueError:
                continue
    return labels, rows


def _echo_vote(messages: Sequence[ChatMessage]) -> str:
    """Reply FINAL: <majority label of the prompt table>, vote-tie semantics included.

    Independent of the coordinator's own tally on purpose: it lets tests check
    that the LLM-mediated path and the Vote strategy agree end to end.
    """
    prompt = "\n".join(m.content for m in messages if m.role is Role.USER)
    labels, rows = _parse_outcome_table(prompt)
    if not labels or not rows:
        return "I could not find any model outcomes to vote on."
    counts = [0] * len(labels)
    for _, probs in rows:
        counts[max(range(len(labels)), key=lambda i: (probs[i], -i))] += 1
    top = max(counts)
    tied = [i for i, c in enumerate(counts) if c == top]
    if len(tied) > 1:
        means = [sum(probs[i] for _, probs in rows) / len(rows) for i in range(len(labels))]
        best_mean = max(means[i] for i in tied)
        tied = [i for i in tied if means[i] == best_mean]
    winner = tied[0]
    return f"FINAL: {labels[winner]}"


RULES: dict[str, Callable[[Sequence[ChatMessage]], str]] = {
    "echo-vote": _echo_vote,
}


class RuleBackend(LlmBackend):
    """Applies a named deterministic reply function to the conversation."""

    def __init__(self, tag: str):
        if tag not in RULES:
            raise ValueError(f"unknown rule tag {tag!r}; known: {sorted(RULES)}")
        self.tag = tag
        self._fn = RULES[tag]

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _check_messages(messages)
        return self._fn(messages)


class RemoteBackend(LlmBackend):
    """One chat-completion request per call; no internal retries.

    The credential is read from an environment variable at call time and is
    never echoed into errors or logs.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model_name: str | None = None,
        credentials_env: str = API_KEY_ENV,
        temperature: float = 0.0,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    ):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        self.model_name = model_name or os.environ.get(MODEL_ENV, "")
        self.credentials_env = credentials_env
        if not 0.0 <= temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        self.temperature = temperature
        self.timeout_ms = timeout_ms
        self._slots = threading.Semaphore(max_in_flight)
        if not self.endpoint:
            raise ValueError(f"remote backend needs an endpoint (or {ENDPOINT_ENV})")

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        _check_messages(messages)
        headers = {}
        credential = os.environ.get(self.credentials_env)
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        body = {
            "model": self.model_name,
            "messages": [{"role": m.role.value, "content": m.content} for m in messages],
            "temperature": self.temperature,
        }
        url = self.endpoint.rstrip("/") + "/chat/completions"
        with self._slots:
            try:
                resp = httpx.post(url, json=body, headers=headers, timeout=self.timeout_ms / 1000)
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                raise BackendUnreachableError(f"chat-completion request failed: {type(exc).__name__}") from None
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedBackendReplyError("response did not contain choices[0].message.content") from None
        if not isinstance(content, str):
            raise MalformedBackendReplyError("assistant content is not text")
        return content


def complete(backend: LlmBackend, messages: Sequence[ChatMessage]) -> str:
    return backend.complete(messages)


def backend_from_config(config: dict) -> LlmBackend:
    """Build a backend from a config mapping ({"kind": "remote"|"scripted"|"rule", ...})."""
    kind = config.get("kind")
    if kind == "scripted":
        return ScriptedBackend(config["transcript"])
    if kind == "rule":
        return RuleBackend(config["tag"])
    if kind == "remote":
        return RemoteBackend(
            endpoint=config.get("endpoint"),
            model_name=config.get("model_name"),
            credentials_env=config.get("credentials_env", API_KEY_ENV),
            temperature=float(config.get("temperature", 0.0)),
            timeout_ms=int(config.get("timeout_ms", DEFAULT_TIMEOUT_MS)),
            max_in_flight=int(config.get("max_in_flight", DEFAULT_MAX_IN_FLIGHT)),
        )
    raise ValueError(f"unknown llm backend kind {kind!r}")
