import { describe, expect, it } from "vitest";

import { bandText, iterationRowsHtml, outcomeText } from "../src/render";
import { buildTraceView, SessionViewModel } from "../src/viewmodel";
import type { TraceDoc } from "../src/types";

import replayFixture from "./fixtures/appendix_d_trace.json";
import runningFixture from "./fixtures/running_trace.json";

const replay = buildTraceView(replayFixture as unknown as TraceDoc) as SessionViewModel;
const running = buildTraceView(runningFixture as unknown as TraceDoc) as SessionViewModel;

describe("iteration table rendering", () => {
  it("puts the fixture's byte and metric strings into the cells verbatim", () => {
    const html = iterationRowsHtml(replay);
    const fixtureIterations = (replayFixture as unknown as TraceDoc).segments[0]
      .iterations;
    for (const it of fixtureIterations) {
      expect(html).toContain(`<td>${it.bytes}</td>`);
      expect(html).toContain(`<td>${it.metric_value}</td>`);
      expect(html).toContain(`<td>[${it.q_factors.join(", ")}]</td>`);
    }
    expect(html.match(/<tr/g)).toHaveLength(6);
    expect(html.match(/class="chosen"/g)).toHaveLength(1);
  });

  it("escapes markup in text fields", () => {
    const view = JSON.parse(JSON.stringify(replay)) as SessionViewModel;
    view.rows[0].metricText = "<script>";
    expect(iterationRowsHtml(view)).toContain("&lt;script&gt;");
  });
});

describe("status text", () => {
  it("reports the accepted outcome with the chosen iteration", () => {
    expect(outcomeText(replay)).toBe("outcome: accepted (iteration 5)");
  });

  it("reports progress while running", () => {
    expect(outcomeText(running)).toBe("running: refining...");
  });

  it("renders the byte band verbatim", () => {
    expect(bandText(replay)).toBe("target band 14744 .. 15000 bytes");
    expect(bandText(running)).toBe("target band 14744 .. 15000 bytes");
  });
});
