"""Four-stage episode driver: observe the query, plan a tool action, execute,
and coordinate the outcomes — emitting one trace event per stage.

Intent extraction is keyword-first so the pipeline is fully deterministic
without an LLM; when an LLM backend is supplied, its structured reply
overrides the keyword classification.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Callable, Mapping

from .coordinator import CoordinationError, CoordinationStrategy, coordinate
from .domain import (
    AgentResponse,
    Modality,
    Query,
    ResponseError,
    ScanRef,
    SessionState,
    Stage,
    TaskKind,
    TraceEvent,
)
from .llm import ChatMessage, LlmBackend, LlmError, Role, TranscriptExhaustedError
from .registry import (
    AllBackendsFailedError,
    NoApplicableToolError,
    ToolRegistry,
)

DIAGNOSIS_CUES = ("stage", "diagnose", "diagnosis", "what condition")
PROGNOSIS_CUES = ("progress", "convert", "36 months", "prognosis")

_INTENT_RE = re.compile(r"^\s*intent\s*:\s*(diagnosis|prognosis|unknown)\s*$", re.IGNORECASE | re.MULTILINE)

CLARIFICATION_NARRATIVE = (
    "I could not tell whether you are asking about the current disease stage "
    "(diagnosis) or future progression (prognosis). Please rephrase your question, "
    "and upload an MRI or PET scan if you have not done so."
)


class EngineError(Exception):
    code = "EngineError"


class MissingScansError(EngineError):
    code = "MissingScans"


@dataclass(frozen=True)
class Observation:
    """What the engine saw: classified intent, session modalities, sub-queries."""

    intent: TaskKind | None
    available_modalities: frozenset[Modality]
    sub_queries: tuple[str, ...]

    def to_payload(self) -> dict:
        return {
            "intent": self.intent.value if self.intent else "unknown",
            "available_modalities": sorted(m.value for m in self.available_modalities),
            "sub_queries": list(self.sub_queries),
        }


@dataclass(frozen=True)
class PlanStep:
    tool_id: str
    inputs: Mapping[Modality, ScanRef]


@dataclass(frozen=True)
class ActionPlan:
    steps: tuple[PlanStep, ...]
    strategy: CoordinationStrategy

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("action plan requires at least one step")

    def to_payload(self) -> dict:
        return {
            "steps": [
                {
                    "tool_id": step.tool_id,
                    "inputs": {m.value: ref.id for m, ref in sorted(step.inputs.items())},
                }
                for step in self.steps
            ],
            "strategy": self.strategy.to_dict(),
        }


def classify_intent(text: str) -> TaskKind | None:
    """Keyword cue classification; on cue collision the larger hit count wins,
    ties resolve to diagnosis."""
    lowered = text.lower()
    diag = sum(1 for cue in DIAGNOSIS_CUES if cue in lowered)
    prog = sum(1 for cue in PROGNOSIS_CUES if cue in lowered)
    if diag == prog == 0:
        return None
    return TaskKind.PROGNOSIS if prog > diag else TaskKind.DIAGNOSIS


def _llm_intent(llm: LlmBackend, text: str) -> TaskKind | None | str:
    """LLM classification; returns "malformed" when the reply cannot be parsed."""
    messages = [
        ChatMessage(
            Role.SYSTEM,
            "Classify the clinical intent of the user's message. Reply with exactly "
            "one line 'INTENT: diagnosis' (current disease stage), 'INTENT: prognosis' "
            "(future progression / conversion risk) or 'INTENT: unknown'.",
        ),
        ChatMessage(Role.USER, text),
    ]
    try:
        reply = llm.complete(messages)
    except TranscriptExhaustedError:
        raise
    except LlmError:
        return "malformed"
    match = _INTENT_RE.search(reply)
    if not match:
        return "malformed"
    value = match.group(1).lower()
    return None if value == "unknown" else TaskKind(value)


def observe(query: Query, state: SessionState, llm: LlmBackend | None = None) -> Observation:
    """Stage 1: interpret the query and gather what the session already holds."""
    intent = classify_intent(query.text)
    if llm is not None:
        llm_result = _llm_intent(llm, query.text)
        if llm_result != "malformed":
            intent = llm_result
    if intent is TaskKind.DIAGNOSIS:
        sub_queries = ("classify the current disease stage from the available scans",)
    elif intent is TaskKind.PROGNOSIS:
        sub_queries = ("assess the risk of conversion within 36 months from the available scans",)
    else:
        sub_queries = ()
    return Observation(
        intent=intent,
        available_modalities=state.available_modalities,
        sub_queries=sub_queries,
    )


def plan(
    obs: Observation,
    scans: Mapping[Modality, ScanRef],
    registry: ToolRegistry,
    strategy: CoordinationStrategy,
) -> ActionPlan:
    """Stage 2: pick the most specific applicable tool for the observed intent."""
    if obs.intent is None:
        raise EngineError("cannot plan for an unknown intent")
    if not obs.available_modalities:
        raise MissingScansError(
            f"a {obs.intent.value} query needs at least one uploaded scan (MRI or PET)"
        )
    tool_ids = registry.resolve_tools(obs.intent, obs.available_modalities)
    manifest = registry.get(tool_ids[0])
    inputs = {m: scans[m] for m in manifest.required_modalities}
    return ActionPlan(steps=(PlanStep(manifest.tool_id, inputs),), strategy=strategy)


def run_episode(
    query: Query,
    state: SessionState,
    registry: ToolRegistry,
    strategy: CoordinationStrategy,
    llm: LlmBackend | None = None,
    on_event: Callable[[TraceEvent], None] | None = None,
) -> AgentResponse:
    """Drive one full episode, appending trace events to the session as they occur.

    Plan, invocation and coordination errors become structured failure
    responses; the trace always keeps the prefix of stages that did run.
    """

    def emit(stage: Stage, payload: dict) -> TraceEvent:
        event = TraceEvent(seq=state.next_seq, stage=stage, payload=payload, timestamp=time.time())
        state.append_event(event)
        if on_event is not None:
            on_event(event)
        return event

    def fail(code: str, message: str) -> AgentResponse:
        response = AgentResponse(
            decision=None,
            narrative=f"I could not complete this request: {message}",
            contributing_tools=(),
            error=ResponseError(code=code, message=message),
        )
        state.add_exchange(query, response)
        return response

    obs = observe(query, state, llm)
    emit(Stage.OBSERVATION, obs.to_payload())

    if obs.intent is None:
        emit(Stage.THOUGHT, {"kind": "clarification", "reason": "intent not recognized"})
        response = AgentResponse(
            decision=None, narrative=CLARIFICATION_NARRATIVE, contributing_tools=()
        )
        state.add_exchange(query, response)
        return response

    try:
        action_plan = plan(obs, state.scans, registry, strategy)
    except (MissingScansError, NoApplicableToolError) as exc:
        emit(
            Stage.THOUGHT,
            {"kind": "planning_failed", "error": {"code": exc.code, "message": str(exc)}},
        )
        return fail(exc.code, str(exc))

    emit(Stage.THOUGHT, {"kind": "action_plan", **action_plan.to_payload()})

    collected = []
    for step in action_plan.steps:
        manifest = registry.get(step.tool_id)
        try:
            tool_outcome = registry.invoke_tool(manifest, step.inputs)
        except AllBackendsFailedError as exc:
            emit(Stage.ACTION, exc.tool_outcome.to_dict())
            return fail(exc.code, str(exc))
        emit(Stage.ACTION, tool_outcome.to_dict())
        collected.append(tool_outcome)

    outcomes = [o for tool_outcome in collected for o in tool_outcome.outcomes]
    try:
        decision = coordinate(strategy, outcomes, llm)
    except CoordinationError as exc:
        return fail(exc.code, str(exc))

    emit(Stage.COORDINATION, {"decision": decision.to_dict()})

    tool_ids = tuple(t.tool_id for t in collected)
    ok_count = sum(len(t.ok_outcomes) for t in collected)
    narrative = (
        f"{decision.task.value.capitalize()} assessment: {decision.label_name}. "
        f"Coordinated {ok_count} model outcome(s) from {', '.join(tool_ids)} "
        f"using the {decision.strategy.value} strategy. {decision.rationale}"
    )
    response = AgentResponse(decision=decision, narrative=narrative, contributing_tools=tool_ids)
    state.add_exchange(query, response)
    return response
