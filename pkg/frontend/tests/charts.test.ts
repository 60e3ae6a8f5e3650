import { describe, expect, it } from "vitest";

import {
  columnAt,
  divergingColor,
  matrixAbsMax,
  matrixMax,
  populationColor,
  renderSeriesChart,
} from "../src/charts";
import type { PopulationPayload } from "../src/types";

const payload: PopulationPayload = {
  slot_seconds: 600,
  areas: ["A", "B"],
  values: [
    [1, 4, 2],
    [0, 3, 5],
  ],
};

describe("chart helpers", () => {
  it("columnAt picks the exact payload column", () => {
    expect(columnAt(payload, 1)).toEqual({ A: 4, B: 3 });
    expect(columnAt(payload, 0)).toEqual({ A: 1, B: 0 });
  });

  it("matrix extrema", () => {
    expect(matrixMax(payload.values)).toBe(5);
    expect(matrixAbsMax([[-7, 2], [3, -1]])).toBe(7);
  });

  it("diverging colour is neutral at zero and signed elsewhere", () => {
    expect(divergingColor(0, 10)).toBe("#f7f7f7");
    expect(divergingColor(5, 10)).toMatch(/^rgb\(248/);
    expect(divergingColor(-5, 10)).toMatch(/\, 248\)$/);
  });

  it("population colour saturates with the maximum", () => {
    expect(populationColor(0, 10)).not.toBe(populationColor(10, 10));
  });

  it("series chart renders one polyline per area with exact points", () => {
    const host = document.createElement("div");
    renderSeriesChart(host, payload, "test");
    const lines = host.querySelectorAll("polyline");
    expect(lines.length).toBe(2);
    const a = host.querySelector('polyline[data-series="A"]')!;
    expect(a.getAttribute("points")!.split(" ").length).toBe(3);
  });
});
