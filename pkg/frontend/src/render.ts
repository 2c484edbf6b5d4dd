// Pure HTML-string renderers. Given the same events these produce byte-equal
// markup, which is what makes the trace panel reload-stable and snapshot-testable.

import type { Episode, SlotStatus } from "./state";
import type {
  AgentResponse,
  Decision,
  ErrorPayload,
  Modality,
  ModelOutcome,
  StageName,
  ToolOutcomePayload,
  TraceEvent,
} from "./types";
import { TASK_LABELS } from "./types";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const STAGE_TITLES: Record<StageName, string> = {
  observation: "Observation",
  thought: "Thought",
  action: "Action",
  coordination: "Coordination",
};

export function renderProbabilityBar(label: string, p: number): string {
  const width = Math.round(p * 1000) / 10;
  return (
    `<div class="prob-row">` +
    `<span class="prob-label">${escapeHtml(label)}</span>` +
    `<span class="prob-bar"><span class="prob-fill" style="width:${width}%"></span></span>` +
    `<span class="prob-value">${p.toFixed(4)}</span>` +
    `</div>`
  );
}

export function renderModelRow(outcome: ModelOutcome, labels: string[]): string {
  if (outcome.status !== "ok" || !outcome.distribution) {
    return (
      `<div class="model-row model-failed">` +
      `<span class="model-id">${escapeHtml(outcome.model_id)}</span>` +
      `<span class="model-flag">failed: ${escapeHtml(outcome.reason ?? "unknown")}</span>` +
      `</div>`
    );
  }
  const bars = outcome.distribution.probs
    .map((p, i) => renderProbabilityBar(labels[i] ?? `#${i}`, p))
    .join("");
  return (
    `<div class="model-row">` +
    `<span class="model-id">${escapeHtml(outcome.model_id)}</span>` +
    `<div class="model-probs">${bars}</div>` +
    `</div>`
  );
}

function renderObservationBody(payload: Record<string, unknown>): string {
  const intent = String(payload.intent ?? "unknown");
  const modalities = (payload.available_modalities as string[] | undefined) ?? [];
  const subQueries = (payload.sub_queries as string[] | undefined) ?? [];
  const items = subQueries.map((q) => `<li>${escapeHtml(q)}</li>`).join("");
  return (
    `<p>intent: <strong>${escapeHtml(intent)}</strong></p>` +
    `<p>available scans: ${escapeHtml(modalities.join(", ") || "none")}</p>` +
    (items ? `<ul class="sub-queries">${items}</ul>` : "")
  );
}

function renderThoughtBody(payload: Record<string, unknown>): string {
  const kind = String(payload.kind ?? "");
  if (kind === "action_plan") {
    const steps = (payload.steps as { tool_id: string; inputs: Record<string, string> }[]) ?? [];
    const rows = steps
      .map(
        (s) =>
          `<li>invoke <code>${escapeHtml(s.tool_id)}</code> with ` +
          `${escapeHtml(Object.keys(s.inputs).join(", "))}</li>`,
      )
      .join("");
    const strategy = payload.strategy as { kind?: string } | undefined;
    return (
      `<ul class="plan-steps">${rows}</ul>` +
      `<p>strategy: <strong>${escapeHtml(strategy?.kind ?? "?")}</strong></p>`
    );
  }
  if (kind === "planning_failed") {
    return renderErrorPayload(payload.error as ErrorPayload);
  }
  return `<p>${escapeHtml(kind || "thought")}</p>`;
}

function renderActionBody(payload: Record<string, unknown>): string {
  const outcome = payload as unknown as ToolOutcomePayload;
  const labels = TASK_LABELS[outcome.task] ?? [];
  const rows = outcome.outcomes.map((o) => renderModelRow(o, labels)).join("");
  return (
    `<p>tool: <code>${escapeHtml(outcome.tool_id)}</code></p>` +
    `<div class="model-rows">${rows}</div>`
  );
}

function renderCoordinationBody(payload: Record<string, unknown>): string {
  const decision = payload.decision as Decision | undefined;
  if (!decision) return "<p>no decision recorded</p>";
  const agg = decision.aggregate_probs;
  const labels = TASK_LABELS[decision.task] ?? [];
  const bars = agg ? agg.probs.map((p, i) => renderProbabilityBar(labels[i] ?? `#${i}`, p)).join("") : "";
  return (
    `<p class="decision-banner">strategy <strong>${escapeHtml(decision.strategy)}</strong>` +
    ` decided <strong class="decision-label">${escapeHtml(decision.label_name)}</strong></p>` +
    (bars ? `<div class="model-probs">${bars}</div>` : "") +
    `<p class="rationale">${escapeHtml(decision.rationale)}</p>`
  );
}

export function renderStageBlock(event: TraceEvent): string {
  let body: string;
  switch (event.stage) {
    case "observation":
      body = renderObservationBody(event.payload);
      break;
    case "thought":
      body = renderThoughtBody(event.payload);
      break;
    case "action":
      body = renderActionBody(event.payload);
      break;
    case "coordination":
      body = renderCoordinationBody(event.payload);
      break;
  }
  return (
    `<details class="stage stage-${event.stage}" open>` +
    `<summary><span class="stage-seq">#${event.seq}</span> ${STAGE_TITLES[event.stage]}</summary>` +
    `<div class="stage-body">${body}</div>` +
    `</details>`
  );
}

function hasSeqDisorder(events: TraceEvent[]): boolean {
  for (let i = 1; i < events.length; i++) {
    if ((events[i]?.seq ?? 0) <= (events[i - 1]?.seq ?? 0)) return true;
  }
  return false;
}

export function renderEpisode(
  events: TraceEvent[],
  response?: AgentResponse | null,
  flagOutOfOrder = false,
): string {
  const warning =
    flagOutOfOrder || hasSeqDisorder(events)
      ? `<div class="badge badge-warning">out-of-order events</div>`
      : "";
  const blocks = events.map(renderStageBlock).join("");
  const footer = response?.error
    ? renderErrorPayload(response.error)
    : response?.decision
      ? `<div class="episode-decision">→ ${escapeHtml(response.decision.label_name)}</div>`
      : "";
  return `<section class="episode">${warning}${blocks}${footer}</section>`;
}

export function renderEpisodes(episodes: Episode[]): string {
  return episodes.map((e) => renderEpisode(e.events, null, e.outOfOrder)).join("");
}

/** Structured gateway errors are shown verbatim: code and message. */
export function renderErrorPayload(error: ErrorPayload | undefined | null): string {
  if (!error) return "";
  return (
    `<div class="badge badge-error" role="alert">` +
    `<span class="error-code">${escapeHtml(error.code)}</span> ` +
    `<span class="error-message">${escapeHtml(error.message)}</span>` +
    `</div>`
  );
}

export function renderSlot(modality: Modality, slot: SlotStatus): string {
  const title = modality.toUpperCase();
  switch (slot.kind) {
    case "empty":
      return `<div class="slot slot-empty">${title}: no scan uploaded</div>`;
    case "uploading":
      return `<div class="slot slot-uploading">${title}: uploading ${escapeHtml(slot.fileName)}…</div>`;
    case "validated":
      return (
        `<div class="slot slot-validated">${title}: ` +
        `<code>${escapeHtml(slot.scan.id)}</code> ` +
        `${slot.scan.dims.join("×")} ✓</div>`
      );
    case "error":
      return `<div class="slot slot-error">${title}: ${renderErrorPayload(slot.error)}</div>`;
  }
}

export function renderTranscriptEntry(entry: {
  role: "user" | "agent";
  text: string;
  response?: AgentResponse;
}): string {
  const error = entry.response?.error ? renderErrorPayload(entry.response.error) : "";
  return (
    `<div class="chat-entry chat-${entry.role}">` +
    `<div class="chat-text">${escapeHtml(entry.text)}</div>${error}` +
    `</div>`
  );
}
