// Training timeline: lr, total loss, and validation balanced accuracy per
// epoch as SVG polylines (each series scaled to its own range, so shapes
// are comparable without a dependency).

import type { EpochMetrics } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const WIDTH = 560;
const HEIGHT = 160;
const PAD = 8;

interface Series {
  name: string;
  cssClass: string;
  points: Array<{ epoch: number; value: number }>;
}

export function renderChart(container: HTMLElement, history: EpochMetrics[]): void {
  container.textContent = "";
  const doc = container.ownerDocument;
  if (history.length < 2) {
    const hint = doc.createElement("p");
    hint.className = "muted";
    hint.textContent = "training metrics appear here (one point per epoch)";
    container.appendChild(hint);
    return;
  }

  const series: Series[] = [
    {
      name: "lr",
      cssClass: "series-lr",
      points: history.map((h) => ({ epoch: h.epoch, value: h.lr })),
    },
    {
      name: "total loss",
      cssClass: "series-loss",
      points: history.map((h) => ({ epoch: h.epoch, value: h.terms.total })),
    },
    {
      name: "val balanced acc",
      cssClass: "series-acc",
      points: history
        .filter((h) => h.val_acc !== null)
        .map((h) => ({ epoch: h.epoch, value: h.val_acc as number })),
    },
  ];

  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${WIDTH} ${HEIGHT}`);
  svg.setAttribute("class", "timeline");

  const epochs = history.map((h) => h.epoch);
  const eMin = Math.min(...epochs);
  const eMax = Math.max(...epochs);
  const x = (epoch: number) =>
    PAD + ((epoch - eMin) / Math.max(1e-9, eMax - eMin)) * (WIDTH - 2 * PAD);

  for (const s of series) {
    if (s.points.length < 2) continue;
    const values = s.points.map((p) => p.value);
    const vMin = Math.min(...values);
    const vMax = Math.max(...values);
    const y = (v: number) =>
      HEIGHT - PAD - ((v - vMin) / Math.max(1e-9, vMax - vMin)) * (HEIGHT - 2 * PAD);
    const line = doc.createElementNS(SVG_NS, "polyline");
    line.setAttribute("class", `series ${s.cssClass}`);
    line.setAttribute("fill", "none");
    line.setAttribute(
      "points",
      s.points.map((p) => `${x(p.epoch).toFixed(1)},${y(p.value).toFixed(1)}`).join(" "),
    );
    svg.appendChild(line);
  }
  container.appendChild(svg);

  const legend = doc.createElement("p");
  legend.className = "legend";
  const last = history[history.length - 1];
  const lastAcc = [...history].reverse().find((h) => h.val_acc !== null)?.val_acc;
  legend.textContent =
    `epoch ${last.epoch} (${last.phase}) | lr ${last.lr.toExponential(2)} | ` +
    `loss ${last.terms.total.toFixed(4)} | val acc ${lastAcc !== undefined && lastAcc !== null ? (100 * lastAcc).toFixed(1) + "%" : "n/a"}`;
  container.appendChild(legend);
}
