// Wire types mirroring the gateway's canonical JSON (lower_snake_case fields).

export type Modality = "mri" | "pet";
export type TaskKind = "diagnosis" | "prognosis";
export type StageName = "observation" | "thought" | "action" | "coordination";
export type StrategyKind = "average" | "vote" | "llm_coordinated";

export const TASK_LABELS: Record<TaskKind, string[]> = {
  diagnosis: ["CN", "MCI", "AD"],
  prognosis: ["Stable", "Converter"],
};

export interface ClassDistribution {
  task: TaskKind;
  probs: number[];
}

export interface ModelOutcome {
  model_id: string;
  distribution: ClassDistribution | null;
  latency_ms: number;
  status: "ok" | "failed";
  reason: string | null;
}

export interface ToolOutcomePayload {
  tool_id: string;
  task: TaskKind;
  outcomes: ModelOutcome[];
}

export interface Decision {
  task: TaskKind;
  label_index: number;
  label_name: string;
  aggregate_probs: ClassDistribution | null;
  strategy: StrategyKind;
  rationale: string;
}

export interface ErrorPayload {
  code: string;
  message: string;
}

export interface AgentResponse {
  decision: Decision | null;
  narrative: string;
  contributing_tools: string[];
  error: ErrorPayload | null;
}

export interface TraceEvent {
  seq: number;
  stage: StageName;
  payload: Record<string, unknown>;
  timestamp: number;
}

export interface ScanRef {
  id: string;
  modality: Modality;
  source_uri: string;
  dims: number[];
  datatype_code: number;
  validated: boolean;
}

export interface StrategyConfig {
  kind: StrategyKind;
  fallback?: StrategyKind;
}
