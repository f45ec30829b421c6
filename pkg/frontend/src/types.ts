/**
 * API payload types for the /api/v1 backend, plus defensive type guards.
 * The UI renders exclusively from these payloads; it never recomputes
 * answers or metrics on its own.
 */

export type AnswerKind = "SCALAR" | "TIMESTAMP" | "INTERVAL" | "DATE_SET" | "REPORT";

export interface WindowPayload {
  start: string;
  end: string;
}

export interface ReportSegmentPayload {
  start: string;
  end: string;
  direction: "RISE" | "FALL" | "STABLE";
  modifier: "RAPID" | "GRADUAL" | "STEADY" | "FLUCTUATING";
}

export interface ReportPayload {
  segments: ReportSegmentPayload[];
  outliers: string[];
}

export interface AnswerPayload {
  kind: AnswerKind | string;
  payload: unknown;
}

export interface Highlights {
  windows: { start: number; end: number }[];
  timestamps: number[];
}

export interface SeriesData {
  timestamps: number[];
  values: number[];
  total_points: number;
}

export interface PlotData extends SeriesData {
  channel: string;
  window: { start: number; end: number };
}

export interface StepLogPayload {
  op: string;
  binding: string;
  params: Record<string, unknown>;
  output_digest: string;
  note: string;
}

export interface AttemptPayload {
  plan_digest: string;
  mode: string;
  fallback: boolean;
  search_rows: number | null;
  search_digest: string | null;
  steps: StepLogPayload[];
  outcome: string;
  error: string | null;
}

export interface TracePayload {
  attempts: AttemptPayload[];
  retries_used: number;
}

export interface QueryResponse {
  answer: AnswerPayload | null;
  error?: { code: string; message: string } | null;
  trace: TracePayload;
  plan: unknown;
  highlights?: Highlights;
  plot_data?: PlotData | null;
}

export interface SampleSummary {
  id: string;
  task_type: string;
  level: number;
  question: string;
  status: "PENDING" | "ACCEPTED" | "REJECTED" | string;
  snr: number | null;
}

export interface OverlayData {
  timestamps: number[];
  values: number[];
}

export interface SampleDetail {
  instance: {
    id: string;
    question: string;
    task_type: string;
    level: number;
    answer_kind: string;
    ground_truth: AnswerPayload;
    context_window: WindowPayload;
    snr: number | null;
  };
  status: string;
  chart: {
    channel: string;
    raw: SeriesData;
    injected: OverlayData | null;
    truth_highlights: Highlights;
  };
}

export interface ApiError {
  code: string;
  message: string;
}

export function isAnswerPayload(value: unknown): value is AnswerPayload {
  return (
    typeof value === "object" &&
    value !== null &&
    typeof (value as AnswerPayload).kind === "string" &&
    "payload" in (value as object)
  );
}

export function isWindowPayload(value: unknown): value is WindowPayload {
  const w = value as WindowPayload;
  return (
    typeof value === "object" &&
    value !== null &&
    typeof w.start === "string" &&
    typeof w.end === "string"
  );
}

export function isReportPayload(value: unknown): value is ReportPayload {
  const r = value as ReportPayload;
  return (
    typeof value === "object" &&
    value !== null &&
    Array.isArray(r.segments) &&
    Array.isArray(r.outliers)
  );
}
