// Typed client for the gateway's public endpoints. The console performs no
// coordination or metric logic of its own; it only calls these and renders.

import type { AgentResponse, Modality, ScanRef, StrategyConfig } from "./types";

export class GatewayRequestError extends Error {
  constructor(readonly code: string, message: string) {
    super(message);
    this.name = "GatewayRequestError";
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    const err = body?.error;
    throw new GatewayRequestError(err?.code ?? `HTTP${resp.status}`, err?.message ?? resp.statusText);
  }
  return body as T;
}

export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  async createSession(strategy?: StrategyConfig): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(strategy ? { strategy } : {}),
    });
    const body = await parseOrThrow<{ session_id: string }>(resp);
    return body.session_id;
  }

  async uploadScan(sessionId: string, modality: Modality, file: Blob): Promise<ScanRef> {
    const resp = await fetch(
      `${this.baseUrl}/sessions/${sessionId}/scans?modality=${modality}`,
      { method: "POST", body: file },
    );
    return parseOrThrow<ScanRef>(resp);
  }

  async postQuery(
    sessionId: string,
    text: string,
    strategy?: StrategyConfig,
  ): Promise<AgentResponse> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(strategy ? { text, strategy } : { text }),
    });
    return parseOrThrow<AgentResponse>(resp);
  }

  traceUrl(sessionId: string, fromSeq: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/trace?from_seq=${fromSeq}`;
  }
}
