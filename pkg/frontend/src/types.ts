// Shapes returned by the compression service API. The UI computes no metric
// or codec values of its own: everything rendered traces back to these
// fields.

export interface IterationRecord {
  index: number;
  q_factors: number[];
  bytes: number;
  metric_value: string; // dB rendered by the backend, "inf" for identical
  note: string;
  verdict: string | null;
}

export interface ConstraintsRecord {
  byte_window: [number, number] | null;
  perf_window: [number, number] | null;
  gate_metric: string;
  gate_note: string;
}

export interface PlanRecord {
  file_path: string;
  compression_mode: string;
  RoI_coding: boolean;
  RoI_object: string | null;
  Object_needed_to_be_transmitted: string;
  encoded_size_level: string;
  specific_performance_limit: boolean;
  specific_bitrate_limit: boolean;
  performance_metric: string | string[];
  bitrate_min: number | null;
  bitrate_max: number | null;
  bitrate_unit: string | null;
  performance_min: number | null;
  performance_max: number | null;
}

export interface SegmentRecord {
  request: string;
  plan: PlanRecord;
  constraints: ConstraintsRecord;
  iterations: IterationRecord[];
  outcome: string;
  chosen_iteration: number | null;
  warnings: string[];
}

export interface TraceDoc {
  id: string;
  state: string;
  segments: SegmentRecord[];
}

export interface SessionSnapshot {
  id: string;
  state: string;
  segments: number;
  created_at: number;
  error: { stage: string; code: string; message: string } | null;
}

export const TERMINAL_STATES = ["done", "failed"];

export function isTerminal(state: string): boolean {
  return TERMINAL_STATES.includes(state);
}
