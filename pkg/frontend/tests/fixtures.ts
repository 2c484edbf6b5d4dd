// Canned episode captured from a live gateway run (timestamps truncated):
// diagnosis query over both modalities, five mock backends, LLM-coordinated.

import type { AgentResponse, TraceEvent } from "../src/types";

export const EPISODE_EVENTS: TraceEvent[] = [
  {
    seq: 1,
    stage: "observation",
    payload: {
      intent: "diagnosis",
      available_modalities: ["mri", "pet"],
      sub_queries: ["classify the current disease stage from the available scans"],
    },
    timestamp: 1700000000.1,
  },
  {
    seq: 2,
    stage: "thought",
    payload: {
      kind: "action_plan",
      steps: [
        {
          tool_id: "mm-diag",
          inputs: { mri: "mri-0929a3f35318", pet: "pet-0929a3f35318" },
        },
      ],
      strategy: { kind: "llm_coordinated", fallback: "average" },
    },
    timestamp: 1700000000.2,
  },
  {
    seq: 3,
    stage: "action",
    payload: {
      tool_id: "mm-diag",
      task: "diagnosis",
      outcomes: [
        {
          model_id: "medicalnet",
          distribution: { task: "diagnosis", probs: [0.1, 0.7, 0.2] },
          latency_ms: 0,
          status: "ok",
          reason: null,
        },
        {
          model_id: "nnmamba",
          distribution: { task: "diagnosis", probs: [0.2, 0.5, 0.3] },
          latency_ms: 0,
          status: "ok",
          reason: null,
        },
        {
          model_id: "resnet50",
          distribution: { task: "diagnosis", probs: [0.6, 0.2, 0.2] },
          latency_ms: 0,
          status: "ok",
          reason: null,
        },
        {
          model_id: "mcad",
          distribution: { task: "diagnosis", probs: [0.1, 0.6, 0.3] },
          latency_ms: 0,
          status: "ok",
          reason: null,
        },
        {
          model_id: "cmvim",
          distribution: { task: "diagnosis", probs: [0.25, 0.35, 0.4] },
          latency_ms: 0,
          status: "ok",
          reason: null,
        },
      ],
    },
    timestamp: 1700000000.3,
  },
  {
    seq: 4,
    stage: "coordination",
    payload: {
      decision: {
        task: "diagnosis",
        label_index: 1,
        label_name: "MCI",
        aggregate_probs: {
          task: "diagnosis",
          probs: [0.25, 0.47000000000000003, 0.27999999999999997],
        },
        strategy: "llm_coordinated",
        rationale: "FINAL: MCI",
      },
    },
    timestamp: 1700000000.4,
  },
];

export const EPISODE_RESPONSE: AgentResponse = {
  decision: {
    task: "diagnosis",
    label_index: 1,
    label_name: "MCI",
    aggregate_probs: {
      task: "diagnosis",
      probs: [0.25, 0.47000000000000003, 0.27999999999999997],
    },
    strategy: "llm_coordinated",
    rationale: "FINAL: MCI",
  },
  narrative:
    "Diagnosis assessment: MCI. Coordinated 5 model outcome(s) from mm-diag using the llm_coordinated strategy. FINAL: MCI",
  contributing_tools: ["mm-diag"],
  error: null,
};

export const CLARIFICATION_EVENTS: TraceEvent[] = [
  {
    seq: 5,
    stage: "observation",
    payload: { intent: "unknown", available_modalities: [], sub_queries: [] },
    timestamp: 1700000001.1,
  },
  {
    seq: 6,
    stage: "thought",
    payload: { kind: "clarification", reason: "intent not recognized" },
    timestamp: 1700000001.2,
  },
];

export const TOO_SHORT_ERROR_BODY = {
  error: { code: "TooShort", message: "need at least 348 header bytes, got 10" },
};
