// Pure view-model construction: trace JSON in, chart-ready rows out.
// Rendering never recomputes backend numbers; malformed documents produce an
// error view instead of throwing.

import {
  isTerminal,
  IterationRecord,
  SegmentRecord,
  TraceDoc,
} from "./types.js";

export interface ChartRow {
  index: number;
  bytes: number;
  metricText: string; // verbatim API value, shown in labels
  metricValue: number | null; // parsed only for chart geometry
  qFactors: number[];
  verdict: string | null;
  chosen: boolean;
}

export interface SessionViewModel {
  kind: "session";
  id: string;
  state: string;
  terminal: boolean;
  followupEnabled: boolean;
  segmentCount: number;
  planPretty: string;
  request: string;
  outcome: string;
  chosenIndex: number | null;
  rows: ChartRow[];
  byteBand: [number, number] | null;
  perfBand: [number, number] | null;
  gateMetric: string;
  warnings: string[];
  artifacts: Record<string, string>;
}

export interface ErrorViewModel {
  kind: "error";
  code: "SchemaMismatch";
  message: string;
}

export type ViewModel = SessionViewModel | ErrorViewModel;

function badSchema(message: string): ErrorViewModel {
  return { kind: "error", code: "SchemaMismatch", message };
}

function checkIteration(it: unknown, at: number): IterationRecord {
  const row = it as IterationRecord;
  if (
    typeof row !== "object" ||
    row === null ||
    typeof row.index !== "number" ||
    typeof row.bytes !== "number" ||
    typeof row.metric_value !== "string" ||
    !Array.isArray(row.q_factors)
  ) {
    throw new Error(`iteration ${at} does not match the trace schema`);
  }
  return row;
}

function checkBand(value: unknown, name: string): [number, number] | null {
  if (value === null || value === undefined) return null;
  if (
    !Array.isArray(value) ||
    value.length !== 2 ||
    typeof value[0] !== "number" ||
    typeof value[1] !== "number"
  ) {
    throw new Error(`${name} is not a [lo, hi] pair`);
  }
  return [value[0], value[1]];
}

export function artifactUrl(sessionId: string, kind: string): string {
  return `/sessions/${encodeURIComponent(sessionId)}/artifacts/${kind}`;
}

/** Build the dashboard view of the latest trace segment. */
export function buildTraceView(doc: TraceDoc): ViewModel {
  try {
    if (typeof doc !== "object" || doc === null || !Array.isArray(doc.segments)) {
      return badSchema("trace document has no segments array");
    }
    if (typeof doc.id !== "string" || typeof doc.state !== "string") {
      return badSchema("trace document is missing id or state");
    }
    const terminal = isTerminal(doc.state);
    if (doc.segments.length === 0) {
      return {
        kind: "session",
        id: doc.id,
        state: doc.state,
        terminal,
        followupEnabled: terminal,
        segmentCount: 0,
        planPretty: "(planning...)",
        request: "",
        outcome: "pending",
        chosenIndex: null,
        rows: [],
        byteBand: null,
        perfBand: null,
        gateMetric: "",
        warnings: [],
        artifacts: { original: artifactUrl(doc.id, "original") },
      };
    }
    const segment = doc.segments[doc.segments.length - 1] as SegmentRecord;
    if (typeof segment !== "object" || segment === null || !Array.isArray(segment.iterations)) {
      return badSchema("segment has no iterations array");
    }
    const chosen =
      typeof segment.chosen_iteration === "number" ? segment.chosen_iteration : null;
    const rows: ChartRow[] = segment.iterations.map((raw, at) => {
      const it = checkIteration(raw, at);
      const parsed = Number.parseFloat(it.metric_value);
      return {
        index: it.index,
        bytes: it.bytes,
        metricText: it.metric_value,
        metricValue: Number.isFinite(parsed) ? parsed : null,
        qFactors: it.q_factors,
        verdict: it.verdict ?? null,
        chosen: chosen !== null && it.index === chosen,
      };
    });
    rows.sort((a, b) => a.index - b.index);
    const constraints = segment.constraints ?? null;
    if (constraints === null || typeof constraints !== "object") {
      return badSchema("segment has no constraints object");
    }
    return {
      kind: "session",
      id: doc.id,
      state: doc.state,
      terminal,
      followupEnabled: terminal,
      segmentCount: doc.segments.length,
      planPretty: JSON.stringify(segment.plan, null, 2),
      request: segment.request ?? "",
      outcome: segment.outcome ?? "pending",
      chosenIndex: chosen,
      rows,
      byteBand: checkBand(constraints.byte_window, "byte_window"),
      perfBand: checkBand(constraints.perf_window, "perf_window"),
      gateMetric: String(constraints.gate_metric ?? ""),
      warnings: Array.isArray(segment.warnings) ? segment.warnings.map(String) : [],
      artifacts: {
        original: artifactUrl(doc.id, "original"),
        recon: artifactUrl(doc.id, "recon"),
        mask: artifactUrl(doc.id, "mask"),
        stream: artifactUrl(doc.id, "stream"),
        plan: artifactUrl(doc.id, "plan"),
      },
    };
  } catch (err) {
    return badSchema(err instanceof Error ? err.message : String(err));
  }
}

/** Body for POST /sessions/{id}/message; null while the session is running. */
export function composeFollowup(
  view: ViewModel,
  userText: string,
): { instruction: string } | null {
  if (view.kind !== "session" || !view.followupEnabled) return null;
  const instruction = userText.trim();
  if (!instruction) return null;
  return { instruction };
}

/** Serialize plan-inspector edits back to an instruction template. */
export function editsToInstruction(
  view: SessionViewModel,
  edits: { bitrateMax?: number; bitrateUnit?: string; sizeLevel?: string },
): string {
  const plan = JSON.parse(view.planPretty) as { file_path?: string };
  const file = plan.file_path || "the image";
  if (edits.bitrateMax !== undefined) {
    const unit = edits.bitrateUnit ?? "Bytes";
    return `Compress ${file}. Target a size of about ${edits.bitrateMax} ${unit}.`;
  }
  if (edits.sizeLevel) {
    return `Compress ${file}. Target a ${edits.sizeLevel} file size.`;
  }
  return `Compress ${file}.`;
}
