import { describe, expect, it } from "vitest";

import { computeExtent, windowToRect, xScale, yScale, type ChartArea } from "../src/chart.js";

const area: ChartArea = {
  width: 800,
  height: 300,
  padLeft: 50,
  padRight: 10,
  padTop: 10,
  padBottom: 20,
};

const series = {
  timestamps: [0, 100, 200, 300, 400],
  values: [1, 5, 3, 2, 4],
  total_points: 5,
};

describe("chart geometry", () => {
  it("extends the value range by a margin", () => {
    const e = computeExtent(series);
    expect(e.tMin).toBe(0);
    expect(e.tMax).toBe(400);
    expect(e.vMin).toBeLessThan(1);
    expect(e.vMax).toBeGreaterThan(5);
  });

  it("maps time linearly onto the drawable width", () => {
    const e = computeExtent(series);
    expect(xScale(0, e, area)).toBe(50);
    expect(xScale(400, e, area)).toBe(790);
    expect(xScale(200, e, area)).toBeCloseTo((50 + 790) / 2, 5);
  });

  it("maps values top-down", () => {
    const e = computeExtent(series);
    expect(yScale(e.vMax, e, area)).toBe(10);
    expect(yScale(e.vMin, e, area)).toBe(280);
  });

  it("clips highlight windows to the visible range", () => {
    const e = computeExtent(series);
    const rect = windowToRect(100, 200, e, area)!;
    expect(rect.x).toBeGreaterThan(50);
    expect(rect.width).toBeGreaterThan(0);
    const clipped = windowToRect(-500, 50, e, area)!;
    expect(clipped.x).toBe(50);
    expect(windowToRect(900, 1000, e, area)).toBeNull();
  });

  it("degenerate flat series still yields a usable extent", () => {
    const flat = { timestamps: [0, 1], values: [5, 5], total_points: 2 };
    const e = computeExtent(flat);
    expect(e.vMax).toBeGreaterThan(e.vMin);
  });
});
