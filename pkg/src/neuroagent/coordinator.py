"""Collaborative outcome coordination: fuse per-model outcomes into one decision.

Three interchangeable strategies: probability averaging, majority vote, and
LLM-mediated coordination with a deterministic fallback. Ties always resolve
to the lowest label index (least severe class), after any strategy-specific
tie-break has been applied.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .domain import (
    ClassDistribution,
    Decision,
    ModelOutcome,
    StrategyKind,
    TaskKind,
    label_space,
)
from .llm import (
    BackendUnreachableError,
    ChatMessage,
    LlmBackend,
    LlmError,
    MalformedBackendReplyError,
    Role,
    TranscriptExhaustedError,
)

MAX_LLM_RETRIES = 2

_FINAL_RE = re.compile(r"^\s*final\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_REASON_RE = re.compile(r"^\s*reason\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)

REMINDER_TEMPLATE = (
    "Your previous reply did not follow the required grammar. "
    "Reply with exactly one line 'FINAL: <label>' where <label> is one of: {labels}. "
    "You may add one line 'REASON: <short justification>'."
)


class CoordinationError(Exception):
    code = "CoordinationError"


class NoUsableOutcomeError(CoordinationError):
    code = "NoUsableOutcome"


class LlmUnavailableError(CoordinationError):
    code = "LlmUnavailable"


@dataclass(frozen=True)
class CoordinationStrategy:
    """Strategy selector; the LLM-coordinated variant carries a deterministic fallback."""

    kind: StrategyKind
    fallback: StrategyKind = StrategyKind.AVERAGE

    def __post_init__(self) -> None:
        if self.fallback is StrategyKind.LLM_COORDINATED:
            raise ValueError("fallback strategy must be deterministic")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "fallback": self.fallback.value}

    @classmethod
    def from_config(cls, value: "str | dict | CoordinationStrategy | None") -> "CoordinationStrategy":
        if value is None:
            return LLM_COORDINATED
        if isinstance(value, CoordinationStrategy):
            return value
        if isinstance(value, str):
            return cls(kind=StrategyKind(value))
        return cls(
            kind=StrategyKind(value["kind"]),
            fallback=StrategyKind(value.get("fallback", "average")),
        )


AVERAGE = CoordinationStrategy(StrategyKind.AVERAGE)
VOTE = CoordinationStrategy(StrategyKind.VOTE)
LLM_COORDINATED = CoordinationStrategy(StrategyKind.LLM_COORDINATED)


def _usable(outcomes: Sequence[ModelOutcome]) -> list[ModelOutcome]:
    """Ok outcomes in canonical (model_id) order, so results are permutation-invariant."""
    oks = [o for o in outcomes if o.ok]
    if not oks:
        raise NoUsableOutcomeError("no model produced a usable outcome")
    tasks = {o.distribution.task for o in oks}
    if len(tasks) > 1:
        raise CoordinationError(f"outcomes mix tasks: {sorted(t.value for t in tasks)}")
    return sorted(oks, key=lambda o: (o.model_id, o.distribution.probs))


def _mean_distribution(oks: Sequence[ModelOutcome]) -> ClassDistribution:
    task = oks[0].distribution.task
    n = len(label_space(task))
    sums = [0.0] * n
    for o in oks:
        for i, p in enumerate(o.distribution.probs):
            sums[i] += p
    return ClassDistribution(task, tuple(s / len(oks) for s in sums))


def coordinate_average(outcomes: Sequence[ModelOutcome]) -> Decision:
    """Mean of the Ok distributions, argmax wins (soft voting)."""
    oks = _usable(outcomes)
    mean = _mean_distribution(oks)
    idx = mean.argmax()
    space = label_space(mean.task)
    ids = ", ".join(o.model_id for o in oks)
    return Decision(
        task=mean.task,
        label_index=idx,
        label_name=space.name_of(idx),
        aggregate_probs=mean,
        strategy=StrategyKind.AVERAGE,
        rationale=(
            f"mean of {len(oks)} model distributions ({ids}); "
            f"{space.name_of(idx)} has the largest mean probability {mean.probs[idx]:.4f}"
        ),
    )


def coordinate_vote(outcomes: Sequence[ModelOutcome]) -> Decision:
    """One vote per model for its own argmax label (hard voting).

    Vote ties consult the tied labels' mean probabilities, then the lowest index.
    """
    oks = _usable(outcomes)
    task = oks[0].distribution.task
    space = label_space(task)
    counts = [0] * len(space)
    for o in oks:
        counts[o.distribution.argmax()] += 1
    mean = _mean_distribution(oks)

    top = max(counts)
    tied = [i for i, c in enumerate(counts) if c == top]
    tie_note = ""
    if len(tied) > 1:
        best_mean = max(mean.probs[i] for i in tied)
        tied = [i for i in tied if mean.probs[i] == best_mean]
        tie_note = " (vote tie resolved by mean probability, then lowest index)"
    idx = tied[0]

    tally = ", ".join(f"{space.labels[i]}={counts[i]}" for i in range(len(space)))
    return Decision(
        task=task,
        label_index=idx,
        label_name=space.name_of(idx),
        aggregate_probs=mean,
        strategy=StrategyKind.VOTE,
        rationale=f"votes over {len(oks)} models: {tally}{tie_note}",
    )


def build_coordinator_prompt(
    task: TaskKind, outcomes: Sequence[ModelOutcome]
) -> list[ChatMessage]:
    """System + user messages tabulating each Ok model's probabilities (4 decimals)."""
    oks = _usable(outcomes)
    space = label_space(task)
    labels = ", ".join(space.labels)
    system = ChatMessage(
        Role.SYSTEM,
        "You coordinate the outcomes of several independent Alzheimer's disease "
        f"prediction models for the {task.value} task. The possible labels, in "
        f"canonical order, are: {labels}. Weigh the models' probability "
        "distributions and decide the single most defensible label. Reply with "
        "exactly one line 'FINAL: <label>' using one of the labels above; you may "
        "add one line 'REASON: <short justification>'.",
    )
    header = " | ".join(["model_id", *space.labels])
    rows = [
        " | ".join([o.model_id, *(f"{p:.4f}" for p in o.distribution.probs)]) for o in oks
    ]
    user = ChatMessage(
        Role.USER,
        f"Model outcomes for the {task.value} task:\n"
        + "\n".join([header, *rows])
        + "\nReply now, following the required grammar (FINAL: <label>).",
    )
    return [system, user]


def _parse_reply(reply: str, task: TaskKind) -> tuple[int, str] | None:
    """(label_index, rationale) from a grammar-conforming reply, else None."""
    space = label_space(task)
    final = _FINAL_RE.search(reply)
    if not final:
        return None
    idx = space.match(final.group(1))
    if idx is None:
        return None
    reason = _REASON_RE.search(reply)
    return idx, (reason.group(1) if reason else reply.strip())


def _fallback_decision(
    fallback: StrategyKind, outcomes: Sequence[ModelOutcome], note: str
) -> Decision:
    base = coordinate_vote(outcomes) if fallback is StrategyKind.VOTE else coordinate_average(outcomes)
    return Decision(
        task=base.task,
        label_index=base.label_index,
        label_name=base.label_name,
        aggregate_probs=base.aggregate_probs,
        strategy=base.strategy,
        rationale=f"{note}; {base.rationale}",
    )


def coordinate_llm(
    outcomes: Sequence[ModelOutcome],
    llm: LlmBackend,
    fallback: StrategyKind = StrategyKind.AVERAGE,
) -> Decision:
    """Ask the LLM to coordinate; bounded retries, then the deterministic fallback.

    A scripted-transcript exhaustion is a test bug and propagates unchanged.
    """
    oks = _usable(outcomes)
    task = oks[0].distribution.task
    space = label_space(task)
    mean = _mean_distribution(oks)
    messages = build_coordinator_prompt(task, oks)

    attempts = 0
    while True:
        try:
            reply = llm.complete(messages)
        except TranscriptExhaustedError:
            raise
        except (BackendUnreachableError, MalformedBackendReplyError, LlmError) as exc:
            try:
                return _fallback_decision(
                    fallback, oks, f"llm backend failed ({exc.code}); fell back to {fallback.value}"
                )
            except CoordinationError as fb_exc:
                raise LlmUnavailableError(
                    f"llm backend failed and {fallback.value} fallback failed: {fb_exc}"
                ) from exc

        parsed = _parse_reply(reply, task)
        if parsed is not None:
            idx, rationale = parsed
            return Decision(
                task=task,
                label_index=idx,
                label_name=space.name_of(idx),
                aggregate_probs=mean,
                strategy=StrategyKind.LLM_COORDINATED,
                rationale=rationale,
            )

        if attempts >= MAX_LLM_RETRIES:
            return _fallback_decision(
                fallback,
                oks,
                f"llm replies stayed malformed after {attempts} retries; fell back to {fallback.value}",
            )
        attempts += 1
        messages = [
            *messages,
            ChatMessage(Role.ASSISTANT, reply or "(empty reply)"),
            ChatMessage(Role.USER, REMINDER_TEMPLATE.format(labels=", ".join(space.labels))),
        ]


def coordinate(
    strategy: CoordinationStrategy,
    outcomes: Sequence[ModelOutcome],
    llm: LlmBackend | None = None,
) -> Decision:
    """Dispatch to the strategy-specific coordination operation."""
    if strategy.kind is StrategyKind.AVERAGE:
        return coordinate_average(outcomes)
    if strategy.kind is StrategyKind.VOTE:
        return coordinate_vote(outcomes)
    if llm is None:
        return _fallback_decision(
            strategy.fallback,
            _usable(outcomes),
            f"no llm configured; fell back to {strategy.fallback.value}",
        )
    return coordinate_llm(outcomes, llm, fallback=strategy.fallback)
