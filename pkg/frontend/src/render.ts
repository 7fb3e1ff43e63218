// Pure HTML fragments for the dashboard panels; kept free of DOM state so
// fixture tests can assert the exact strings put on screen.

import { SessionViewModel } from "./viewmodel.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** <tr> rows for the iteration table, verbatim API numbers in the cells. */
export function iterationRowsHtml(view: SessionViewModel): string {
  return view.rows
    .map((row) => {
      const cls = row.chosen ? ' class="chosen"' : "";
      const cells = [
        String(row.index),
        `[${row.qFactors.join(", ")}]`,
        String(row.bytes),
        escapeHtml(row.metricText),
        escapeHtml(row.verdict ?? ""),
      ];
      return `<tr${cls}>${cells.map((c) => `<td>${c}</td>`).join("")}</tr>`;
    })
    .join("\n");
}

export function outcomeText(view: SessionViewModel): string {
  if (!view.terminal) return `running: ${view.state}...`;
  const chosen = view.chosenIndex !== null ? ` (iteration ${view.chosenIndex})` : "";
  return `outcome: ${view.outcome}${chosen}`;
}

export function bandText(view: SessionViewModel): string {
  const parts: string[] = [];
  if (view.byteBand) {
    parts.push(`target band ${view.byteBand[0]} .. ${view.byteBand[1]} bytes`);
  }
  if (view.perfBand) {
    parts.push(
      `${view.gateMetric} band ${view.perfBand[0]} .. ${view.perfBand[1]} dB`,
    );
  }
  return parts.join("; ");
}
