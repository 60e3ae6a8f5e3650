import type { PopulationPayload } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";

/** Sequential fill for occupancy counts (white to blue). */
export function populationColor(value: number, max: number): string {
  if (max <= 0) return "#f4f6f8";
  const t = Math.min(1, value / max);
  const shade = Math.round(245 - t * 150);
  return `rgb(${shade}, ${shade + 4}, 248)`;
}

/** Diverging fill for change values: blue below zero, red above. */
export function divergingColor(value: number, absMax: number): string {
  if (absMax <= 0 || value === 0) return "#f7f7f7";
  const t = Math.min(1, Math.abs(value) / absMax);
  const shade = Math.round(245 - t * 160);
  return value > 0 ? `rgb(248, ${shade}, ${shade})` : `rgb(${shade}, ${shade}, 248)`;
}

export function columnAt(payload: PopulationPayload, slot: number): Record<string, number> {
  const out: Record<string, number> = {};
  payload.areas.forEach((area, i) => {
    out[area] = payload.values[i][slot] ?? 0;
  });
  return out;
}

export function matrixMax(values: number[][]): number {
  let max = 0;
  for (const row of values) for (const v of row) max = Math.max(max, v);
  return max;
}

export function matrixAbsMax(values: number[][]): number {
  let max = 0;
  for (const row of values) for (const v of row) max = Math.max(max, Math.abs(v));
  return max;
}

const PALETTE = [
  "#2b6cb0", "#c05621", "#2f855a", "#b83280",
  "#4c51bf", "#975a16", "#287d8e", "#9b2c2c",
];

/** Per-area time-series chart rendered as SVG polylines with a legend.
 *  Every plotted y value is exactly payload.values[area][slot]. */
export function renderSeriesChart(
  container: HTMLElement,
  payload: PopulationPayload,
  title: string,
): void {
  container.replaceChildren();
  const caption = document.createElement("div");
  caption.className = "chart-title";
  caption.textContent = title;
  container.appendChild(caption);

  const width = 640;
  const height = 220;
  const padL = 36;
  const padB = 22;
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "series-chart");
  const slots = payload.values[0]?.length ?? 0;
  const maxV = Math.max(1, matrixMax(payload.values));
  const x = (slot: number) => padL + (slot / Math.max(1, slots - 1)) * (width - padL - 8);
  const y = (v: number) => height - padB - (v / maxV) * (height - padB - 10);

  const axis = document.createElementNS(SVG_NS, "line");
  axis.setAttribute("x1", String(padL));
  axis.setAttribute("y1", String(height - padB));
  axis.setAttribute("x2", String(width - 8));
  axis.setAttribute("y2", String(height - padB));
  axis.setAttribute("stroke", "#889");
  svg.appendChild(axis);

  payload.areas.forEach((area, i) => {
    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute(
      "points",
      payload.values[i].map((v, s) => `${x(s)},${y(v)}`).join(" "),
    );
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", PALETTE[i % PALETTE.length]);
    line.setAttribute("stroke-width", "1.6");
    line.setAttribute("data-series", area);
    svg.appendChild(line);
  });
  container.appendChild(svg);

  const legend = document.createElement("div");
  legend.className = "legend";
  payload.areas.forEach((area, i) => {
    const item = document.createElement("span");
    item.style.color = PALETTE[i % PALETTE.length];
    item.textContent = area;
    legend.appendChild(item);
  });
  container.appendChild(legend);
}
