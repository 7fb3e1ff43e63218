// Dashboard wiring: instruction panel, trace polling, timeline chart,
// comparison viewer, plan inspector, and follow-up input.

import { ApiError, createSession, getTrace, postFollowup } from "./api.js";
import { drawTimeline } from "./chart.js";
import { iterationRowsHtml, outcomeText } from "./render.js";
import { CompareController, mountCompare } from "./compare.js";
import { TraceDoc } from "./types.js";
import {
  buildTraceView,
  composeFollowup,
  editsToInstruction,
  SessionViewModel,
  ViewModel,
} from "./viewmodel.js";

const POLL_INTERVAL_MS = 500;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let sessionId: string | null = null;
let pollTimer: number | null = null;
let pollInFlight = false;
let compare: CompareController | null = null;
let lastView: ViewModel | null = null;

function setStatus(text: string, isError = false): void {
  const status = el<HTMLDivElement>("status");
  status.textContent = text;
  status.classList.toggle("error", isError);
}

function renderError(view: { code: string; message: string }): void {
  el<HTMLDivElement>("error-panel").hidden = false;
  el<HTMLDivElement>("error-panel").textContent = `${view.code}: ${view.message}`;
}

function render(view: ViewModel): void {
  lastView = view;
  el<HTMLDivElement>("error-panel").hidden = true;
  if (view.kind === "error") {
    renderError(view);
    return;
  }
  setStatus(`session ${view.id} — ${view.state}` +
    (view.segmentCount > 1 ? ` (segment ${view.segmentCount})` : ""));
  el<HTMLPreElement>("plan-view").textContent = view.planPretty;
  el<HTMLDivElement>("outcome").textContent = outcomeText(view);

  const warnings = el<HTMLUListElement>("warnings");
  warnings.innerHTML = "";
  for (const warning of view.warnings) {
    const li = document.createElement("li");
    li.textContent = warning;
    warnings.appendChild(li);
  }

  el<HTMLTableSectionElement>("iteration-rows").innerHTML = iterationRowsHtml(view);

  drawTimeline(el<HTMLCanvasElement>("timeline"), view);

  const followInput = el<HTMLInputElement>("followup-text");
  const followButton = el<HTMLButtonElement>("followup-send");
  followInput.disabled = !view.followupEnabled;
  followButton.disabled = !view.followupEnabled;
  followInput.placeholder = view.followupEnabled
    ? "follow-up instruction, e.g. make it under 10000 Bytes"
    : "session is running...";

  if (view.terminal && compare) {
    compare.load(view.artifacts.original, view.artifacts.recon,
                 view.artifacts.mask ?? null);
  }
}

async function poll(): Promise<void> {
  if (!sessionId || pollInFlight) return;
  pollInFlight = true;
  try {
    const doc: TraceDoc = await getTrace(sessionId);
    const view = buildTraceView(doc);
    render(view);
    if (view.kind === "session" && view.terminal && pollTimer !== null) {
      window.clearInterval(pollTimer);
      pollTimer = null;
    }
  } catch (err) {
    if (err instanceof ApiError) setStatus(`${err.body.code}: ${err.body.message}`, true);
    else setStatus(String(err), true);
  } finally {
    pollInFlight = false;
  }
}

function startPolling(): void {
  if (pollTimer !== null) window.clearInterval(pollTimer);
  pollTimer = window.setInterval(poll, POLL_INTERVAL_MS);
  void poll();
}

async function submit(): Promise<void> {
  const instruction = el<HTMLInputElement>("instruction").value.trim();
  const image = el<HTMLInputElement>("image-path").value.trim();
  const planner = el<HTMLSelectElement>("planner").value;
  const transport = el<HTMLSelectElement>("transport").value;
  if (!instruction || !image) {
    setStatus("instruction and image path are required", true);
    return;
  }
  try {
    const created = await createSession(instruction, image, planner, transport);
    sessionId = created.id;
    startPolling();
  } catch (err) {
    if (err instanceof ApiError) setStatus(`${err.body.code}: ${err.body.message}`, true);
    else setStatus(String(err), true);
  }
}

async function sendFollowup(): Promise<void> {
  if (!sessionId || !lastView) return;
  const body = composeFollowup(lastView, el<HTMLInputElement>("followup-text").value);
  if (!body) return;
  try {
    await postFollowup(sessionId, body);
    el<HTMLInputElement>("followup-text").value = "";
    startPolling();
  } catch (err) {
    if (err instanceof ApiError && err.body.code === "SessionBusy") {
      setStatus("session busy — wait for it to finish", true);
    } else if (err instanceof ApiError) {
      setStatus(`${err.body.code}: ${err.body.message}`, true);
    } else {
      setStatus(String(err), true);
    }
  }
}

function resubmitEditedPlan(): void {
  if (!lastView || lastView.kind !== "session") return;
  const bytesField = el<HTMLInputElement>("edit-bytes").value.trim();
  const levelField = el<HTMLSelectElement>("edit-level").value;
  const edits: { bitrateMax?: number; bitrateUnit?: string; sizeLevel?: string } = {};
  if (bytesField) {
    edits.bitrateMax = Number(bytesField);
    edits.bitrateUnit = "Bytes";
  } else if (levelField) {
    edits.sizeLevel = levelField;
  }
  el<HTMLInputElement>("followup-text").value =
    editsToInstruction(lastView as SessionViewModel, edits);
}

export function start(): void {
  compare = mountCompare(el<HTMLDivElement>("compare-root"));
  el<HTMLButtonElement>("submit").addEventListener("click", () => void submit());
  el<HTMLButtonElement>("followup-send").addEventListener("click", () => void sendFollowup());
  el<HTMLButtonElement>("edit-apply").addEventListener("click", resubmitEditedPlan);
  setStatus("no session yet — submit an instruction");
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  start();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
