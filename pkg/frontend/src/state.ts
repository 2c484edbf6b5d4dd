// Console view state and pure transition functions. Everything here is
// deterministic so a reload can rebuild the identical view from the trace
// stream (from_seq=0).

import type {
  AgentResponse,
  ErrorPayload,
  Modality,
  ScanRef,
  StrategyKind,
  TraceEvent,
} from "./types";

export type SlotStatus =
  | { kind: "empty" }
  | { kind: "uploading"; fileName: string }
  | { kind: "validated"; scan: ScanRef }
  | { kind: "error"; error: ErrorPayload };

export interface ChatEntry {
  role: "user" | "agent";
  text: string;
  response?: AgentResponse;
}

export interface Episode {
  events: TraceEvent[];
  outOfOrder: boolean;
}

export interface ConsoleViewState {
  sessionId: string | null;
  transcript: ChatEntry[];
  slots: Record<Modality, SlotStatus>;
  episodes: Episode[];
  strategy: StrategyKind;
  lastSeq: number;
  // a query that failed to send is kept verbatim for the retry affordance
  pendingQuery: string | null;
}

export function initialState(): ConsoleViewState {
  return {
    sessionId: null,
    transcript: [],
    slots: { mri: { kind: "empty" }, pet: { kind: "empty" } },
    episodes: [],
    strategy: "llm_coordinated",
    lastSeq: 0,
    pendingQuery: null,
  };
}

/** Fold one trace event into the panel. Episodes are grouped by the
 * observation event that opens them; duplicates (seq already seen) are
 * dropped so reconnects deliver exactly-once; an event arriving with a
 * non-increasing seq flags its episode as out of order. */
export function applyTraceEvent(state: ConsoleViewState, event: TraceEvent): ConsoleViewState {
  const duplicate = state.episodes.some((e) => e.events.some((x) => x.seq === event.seq));
  if (duplicate) return state;

  const episodes = state.episodes.map((e) => ({ ...e, events: [...e.events] }));
  const outOfOrder = event.seq <= state.lastSeq;
  if (event.stage === "observation" || episodes.length === 0) {
    episodes.push({ events: [event], outOfOrder });
  } else {
    const current = episodes[episodes.length - 1]!;
    current.events.push(event);
    current.outOfOrder = current.outOfOrder || outOfOrder;
  }
  return { ...state, episodes, lastSeq: Math.max(state.lastSeq, event.seq) };
}

export function applyUploadStart(
  state: ConsoleViewState,
  modality: Modality,
  fileName: string,
): ConsoleViewState {
  return { ...state, slots: { ...state.slots, [modality]: { kind: "uploading", fileName } } };
}

export function applyUploadResult(
  state: ConsoleViewState,
  modality: Modality,
  result: { scan: ScanRef } | { error: ErrorPayload },
): ConsoleViewState {
  const slot: SlotStatus =
    "scan" in result ? { kind: "validated", scan: result.scan } : { kind: "error", error: result.error };
  return { ...state, slots: { ...state.slots, [modality]: slot } };
}

export function applyQuerySent(state: ConsoleViewState, text: string): ConsoleViewState {
  return {
    ...state,
    transcript: [...state.transcript, { role: "user", text }],
    pendingQuery: null,
  };
}

export function applyAgentResponse(
  state: ConsoleViewState,
  response: AgentResponse,
): ConsoleViewState {
  return {
    ...state,
    transcript: [...state.transcript, { role: "agent", text: response.narrative, response }],
  };
}

export function applyNetworkFailure(state: ConsoleViewState, text: string): ConsoleViewState {
  return { ...state, pendingQuery: text };
}

export function setStrategy(state: ConsoleViewState, strategy: StrategyKind): ConsoleViewState {
  return { ...state, strategy };
}

/** Rebuild the trace panel from a full replay, as after a page reload. */
export function rebuildFromReplay(
  state: ConsoleViewState,
  events: TraceEvent[],
): ConsoleViewState {
  let next: ConsoleViewState = { ...state, episodes: [], lastSeq: 0 };
  for (const event of events) {
    next = applyTraceEvent(next, event);
  }
  return next;
}
