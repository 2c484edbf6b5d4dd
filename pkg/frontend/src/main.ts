// Browser entry point: wires the gateway client and the pure renderers to the
// DOM and keeps one SSE connection per open session, resuming from the last
// seen seq after a drop.

import { GatewayClient, GatewayRequestError } from "./api";
import {
  applyAgentResponse,
  applyNetworkFailure,
  applyQuerySent,
  applyTraceEvent,
  applyUploadResult,
  applyUploadStart,
  initialState,
  setStrategy,
  type ConsoleViewState,
} from "./state";
import { renderEpisodes, renderErrorPayload, renderSlot, renderTranscriptEntry } from "./render";
import type { Modality, StrategyKind, TraceEvent } from "./types";

const gateway = new GatewayClient(
  new URLSearchParams(location.search).get("gateway") ?? "http://127.0.0.1:8000",
);

let state: ConsoleViewState = initialState();
let source: EventSource | null = null;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function update(next: ConsoleViewState): void {
  state = next;
  $("slots").innerHTML = (["mri", "pet"] as Modality[])
    .map((m) => renderSlot(m, state.slots[m]))
    .join("");
  $("transcript").innerHTML = state.transcript.map(renderTranscriptEntry).join("");
  $("trace-panel").innerHTML = renderEpisodes(state.episodes);
  ($("retry") as HTMLButtonElement).hidden = state.pendingQuery === null;
  $("session-label").textContent = state.sessionId ?? "connecting…";
}

function connectStream(sessionId: string): void {
  source?.close();
  source = new EventSource(gateway.traceUrl(sessionId, state.lastSeq + 1));
  source.onmessage = (msg) => {
    const event = JSON.parse(msg.data) as TraceEvent;
    update(applyTraceEvent(state, event));
  };
  source.onerror = () => {
    // EventSource reconnects on its own, but a resumed connection must not
    // replay what we already rendered
    source?.close();
    setTimeout(() => connectStream(sessionId), 1000);
  };
}

async function ensureSession(): Promise<string> {
  if (state.sessionId) return state.sessionId;
  const sessionId = await gateway.createSession();
  update({ ...state, sessionId });
  connectStream(sessionId);
  return sessionId;
}

async function handleUpload(modality: Modality, input: HTMLInputElement): Promise<void> {
  const file = input.files?.[0];
  if (!file) return;
  const sessionId = await ensureSession();
  update(applyUploadStart(state, modality, file.name));
  try {
    const scan = await gateway.uploadScan(sessionId, modality, file);
    update(applyUploadResult(state, modality, { scan }));
  } catch (err) {
    const payload =
      err instanceof GatewayRequestError
        ? { code: err.code, message: err.message }
        : { code: "NetworkError", message: String(err) };
    update(applyUploadResult(state, modality, { error: payload }));
  } finally {
    input.value = "";
  }
}

async function submitQuery(text: string): Promise<void> {
  const trimmed = text.trim();
  if (!trimmed) return;
  const sessionId = await ensureSession();
  update(applyQuerySent(state, trimmed));
  try {
    const response = await gateway.postQuery(sessionId, trimmed, { kind: state.strategy });
    update(applyAgentResponse(state, response));
  } catch (err) {
    if (err instanceof GatewayRequestError) {
      $("transcript").insertAdjacentHTML(
        "beforeend",
        renderErrorPayload({ code: err.code, message: err.message }),
      );
    } else {
      // network failure: keep the typed query for the retry button
      update(applyNetworkFailure(state, trimmed));
    }
  }
}

function init(): void {
  update(state);
  const queryInput = $("query") as HTMLInputElement;

  $("send").addEventListener("click", () => {
    void submitQuery(queryInput.value);
    queryInput.value = "";
  });
  queryInput.addEventListener("keydown", (e) => {
    if (e.key === "Enter") {
      void submitQuery(queryInput.value);
      queryInput.value = "";
    }
  });
  $("retry").addEventListener("click", () => {
    const pending = state.pendingQuery;
    if (pending) void submitQuery(pending);
  });
  $("strategy").addEventListener("change", (e) => {
    update(setStrategy(state, (e.target as HTMLSelectElement).value as StrategyKind));
  });
  for (const modality of ["mri", "pet"] as Modality[]) {
    $(`upload-${modality}`).addEventListener("change", (e) => {
      void handleUpload(modality, e.target as HTMLInputElement);
    });
  }
  void ensureSession();
}

document.addEventListener("DOMContentLoaded", init);
