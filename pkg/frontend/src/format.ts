/**
 * Pure rendering helpers: answers to display strings, timestamps to labels.
 * Every answer kind has a renderer; an unrecognized kind degrades to a raw
 * JSON dump instead of crashing the console.
 */

import {
  AnswerPayload,
  Highlights,
  ReportPayload,
  isReportPayload,
  isWindowPayload,
} from "./types.js";

export function formatEpoch(seconds: number): string {
  return new Date(seconds * 1000).toISOString().replace(".000Z", "Z");
}

export function parseIso(text: string): number {
  return Math.floor(Date.parse(text) / 1000);
}

export function trendPhrase(direction: string, modifier: string): string {
  return `${modifier.toLowerCase()} ${direction.toLowerCase()}`;
}

export interface RenderedAnswer {
  kind: string;
  headline: string;
  lines: string[];
  raw: boolean;
}

export function renderAnswer(answer: AnswerPayload): RenderedAnswer {
  switch (answer.kind) {
    case "SCALAR": {
      const value = Number(answer.payload);
      return {
        kind: answer.kind,
        headline: Number.isFinite(value) ? formatNumber(value) : String(answer.payload),
        lines: [],
        raw: false,
      };
    }
    case "TIMESTAMP":
      return { kind: answer.kind, headline: String(answer.payload), lines: [], raw: false };
    case "INTERVAL": {
      if (isWindowPayload(answer.payload)) {
        return {
          kind: answer.kind,
          headline: `${answer.payload.start} → ${answer.payload.end}`,
          lines: [],
          raw: false,
        };
      }
      break;
    }
    case "DATE_SET": {
      if (Array.isArray(answer.payload)) {
        const dates = answer.payload.map(String).sort();
        return {
          kind: answer.kind,
          headline: `${dates.length} dates`,
          lines: dates,
          raw: false,
        };
      }
      break;
    }
    case "REPORT": {
      if (isReportPayload(answer.payload)) {
        return {
          kind: answer.kind,
          headline: `${answer.payload.segments.length} segments, ${answer.payload.outliers.length} outliers`,
          lines: reportLines(answer.payload),
          raw: false,
        };
      }
      break;
    }
  }
  // unknown kind or malformed payload: raw fallback, never a blank screen
  return {
    kind: String(answer.kind),
    headline: "(unrecognized answer payload)",
    lines: [JSON.stringify(answer.payload, null, 2)],
    raw: true,
  };
}

export function reportLines(report: ReportPayload): string[] {
  const lines = report.segments.map(
    (s) => `${s.start} → ${s.end}: ${trendPhrase(s.direction, s.modifier)}`,
  );
  if (report.outliers.length > 0) {
    lines.push(`outliers: ${report.outliers.join(", ")}`);
  }
  return lines;
}

export function formatNumber(value: number): string {
  if (Number.isInteger(value)) return String(value);
  const magnitude = Math.abs(value);
  if (magnitude >= 1000) return value.toFixed(1);
  if (magnitude >= 1) return value.toFixed(4);
  return value.toPrecision(4);
}

/** Highlights converted into human-readable chips under the chart. */
export function highlightSummary(highlights: Highlights): string[] {
  const chips: string[] = [];
  for (const w of highlights.windows) {
    chips.push(`window ${formatEpoch(w.start)} → ${formatEpoch(w.end)}`);
  }
  for (const t of highlights.timestamps) {
    chips.push(`at ${formatEpoch(t)}`);
  }
  return chips;
}

export function describeAttempt(attempt: {
  mode: string;
  fallback: boolean;
  search_rows: number | null;
  outcome: string;
  error: string | null;
}): string {
  const bits = [attempt.mode.toLowerCase()];
  if (attempt.search_rows !== null) bits.push(`${attempt.search_rows} candidates`);
  if (attempt.fallback) bits.push("fallback to raw scan");
  bits.push(attempt.outcome);
  if (attempt.error) bits.push(attempt.error);
  return bits.join(" · ");
}
