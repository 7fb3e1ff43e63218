// Canvas timeline: bytes per iteration with the target band, gate metric on a
// secondary axis. Pure geometry; all labels come from view-model strings.

import { SessionViewModel } from "./viewmodel.js";

const PAD = { left: 64, right: 56, top: 16, bottom: 28 };

interface Scale {
  min: number;
  max: number;
  toY(value: number, height: number): number;
}

function makeScale(values: number[], band: [number, number] | null): Scale {
  const all = [...values];
  if (band) all.push(band[0], band[1]);
  let min = Math.min(...all);
  let max = Math.max(...all);
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    min = 0;
    max = 1;
  }
  if (min === max) {
    min -= 1;
    max += 1;
  }
  const margin = (max - min) * 0.08;
  min -= margin;
  max += margin;
  return {
    min,
    max,
    toY(value: number, height: number) {
      const usable = height - PAD.top - PAD.bottom;
      return PAD.top + usable * (1 - (value - min) / (max - min));
    },
  };
}

export function drawTimeline(canvas: HTMLCanvasElement, view: SessionViewModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.font = "11px system-ui, sans-serif";

  if (view.rows.length === 0) {
    ctx.fillStyle = "#889";
    ctx.fillText("no iterations yet", PAD.left, height / 2);
    if (view.byteBand) {
      ctx.fillStyle = "#aab";
      ctx.fillText(
        `target band ${view.byteBand[0]} .. ${view.byteBand[1]} bytes`,
        PAD.left,
        height / 2 + 16,
      );
    }
    return;
  }

  const xs = (index: number) => {
    const usable = width - PAD.left - PAD.right;
    const n = Math.max(view.rows.length - 1, 1);
    return PAD.left + (usable * index) / n;
  };

  const byteScale = makeScale(view.rows.map((r) => r.bytes), view.byteBand);

  // target band
  if (view.byteBand) {
    const [lo, hi] = view.byteBand;
    const top = byteScale.toY(hi, height);
    const bottom = byteScale.toY(lo, height);
    ctx.fillStyle = "rgba(80, 170, 110, 0.18)";
    ctx.fillRect(PAD.left, top, width - PAD.left - PAD.right, bottom - top);
    ctx.strokeStyle = "rgba(80, 170, 110, 0.7)";
    ctx.setLineDash([4, 3]);
    for (const bound of [lo, hi]) {
      const y = byteScale.toY(bound, height);
      ctx.beginPath();
      ctx.moveTo(PAD.left, y);
      ctx.lineTo(width - PAD.right, y);
      ctx.stroke();
      ctx.fillStyle = "#4a7";
      ctx.fillText(String(bound), 4, y + 4);
      ctx.fillStyle = "rgba(80, 170, 110, 0.18)";
    }
    ctx.setLineDash([]);
  }

  // bytes line
  ctx.strokeStyle = "#4878c8";
  ctx.lineWidth = 2;
  ctx.beginPath();
  view.rows.forEach((row, i) => {
    const x = xs(i);
    const y = byteScale.toY(row.bytes, height);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  view.rows.forEach((row, i) => {
    const x = xs(i);
    const y = byteScale.toY(row.bytes, height);
    ctx.fillStyle = row.chosen ? "#d8a020" : "#4878c8";
    ctx.beginPath();
    ctx.arc(x, y, row.chosen ? 6 : 4, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillStyle = "#334";
    ctx.fillText(String(row.bytes), x - 14, y - 10);
    ctx.fillStyle = "#667";
    ctx.fillText(String(row.index), x - 3, height - 8);
  });

  // metric on the secondary axis
  const metricRows = view.rows.filter((r) => r.metricValue !== null);
  if (metricRows.length > 1) {
    const metricScale = makeScale(
      metricRows.map((r) => r.metricValue as number),
      view.perfBand,
    );
    ctx.strokeStyle = "#b05890";
    ctx.lineWidth = 1.5;
    ctx.setLineDash([5, 3]);
    ctx.beginPath();
    view.rows.forEach((row, i) => {
      if (row.metricValue === null) return;
      const x = xs(i);
      const y = metricScale.toY(row.metricValue, height);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.setLineDash([]);
    view.rows.forEach((row, i) => {
      if (row.metricValue === null) return;
      ctx.fillStyle = "#b05890";
      ctx.fillText(row.metricText, xs(i) - 14, metricScale.toY(row.metricValue, height) + 14);
    });
  }
}
