import { describe, expect, it } from "vitest";

import {
  describeAttempt,
  formatEpoch,
  formatNumber,
  highlightSummary,
  renderAnswer,
  reportLines,
} from "../src/format.js";

describe("renderAnswer", () => {
  it("renders scalars with sensible precision", () => {
    const out = renderAnswer({ kind: "SCALAR", payload: 23.83637812 });
    expect(out.kind).toBe("SCALAR");
    expect(out.headline).toBe("23.8364");
    expect(out.raw).toBe(false);
  });

  it("renders timestamps verbatim", () => {
    const out = renderAnswer({ kind: "TIMESTAMP", payload: "2021-03-05T14:00:00Z" });
    expect(out.headline).toBe("2021-03-05T14:00:00Z");
  });

  it("renders intervals as a range", () => {
    const out = renderAnswer({
      kind: "INTERVAL",
      payload: { start: "2021-03-01T00:00:00Z", end: "2021-03-02T00:00:00Z" },
    });
    expect(out.headline).toContain("2021-03-01T00:00:00Z");
    expect(out.headline).toContain("2021-03-02T00:00:00Z");
  });

  it("renders date sets sorted with a count headline", () => {
    const out = renderAnswer({
      kind: "DATE_SET",
      payload: ["2021-05-02", "2021-01-09", "2021-03-17"],
    });
    expect(out.headline).toBe("3 dates");
    expect(out.lines).toEqual(["2021-01-09", "2021-03-17", "2021-05-02"]);
  });

  it("renders reports as segment lines plus outliers", () => {
    const payload = {
      segments: [
        { start: "a", end: "b", direction: "RISE", modifier: "RAPID" },
        { start: "b", end: "c", direction: "STABLE", modifier: "STEADY" },
      ],
      outliers: ["t1"],
    };
    const out = renderAnswer({ kind: "REPORT", payload });
    expect(out.lines[0]).toBe("a → b: rapid rise");
    expect(out.lines[1]).toBe("b → c: steady stable");
    expect(out.lines[2]).toContain("t1");
  });

  it("never crashes on unknown kinds: raw fallback", () => {
    const out = renderAnswer({ kind: "HOLOGRAM", payload: { x: 1 } });
    expect(out.raw).toBe(true);
    expect(out.lines[0]).toContain('"x": 1');
  });

  it("falls back on malformed payloads for known kinds", () => {
    const out = renderAnswer({ kind: "INTERVAL", payload: 42 });
    expect(out.raw).toBe(true);
  });
});

describe("helpers", () => {
  it("formats epochs as RFC 3339 UTC", () => {
    expect(formatEpoch(1614556800)).toBe("2021-03-01T00:00:00Z");
  });

  it("formats numbers by magnitude", () => {
    expect(formatNumber(7)).toBe("7");
    expect(formatNumber(1234.567)).toBe("1234.6");
    expect(formatNumber(0.00123456)).toBe("0.001235");
  });

  it("summarizes highlights as chips", () => {
    const chips = highlightSummary({
      windows: [{ start: 0, end: 3600 }],
      timestamps: [7200],
    });
    expect(chips).toHaveLength(2);
    expect(chips[0]).toContain("1970-01-01T00:00:00Z");
  });

  it("describes attempts including fallback and errors", () => {
    const line = describeAttempt({
      mode: "SEARCH_THEN_VERIFY",
      fallback: true,
      search_rows: 0,
      outcome: "ok",
      error: null,
    });
    expect(line).toContain("fallback to raw scan");
    expect(line).toContain("0 candidates");
  });
});
