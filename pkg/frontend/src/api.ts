/**
 * Thin fetch client for the /api/v1 backend. Configuration is limited to
 * the base URL and an optional bearer token (read from localStorage so a
 * deployment can set it once per browser).
 */

import type { QueryResponse, SampleDetail, SampleSummary, SeriesData } from "./types.js";

export interface ApiConfig {
  baseUrl: string;
  token?: string;
}

export class ApiClient {
  constructor(private config: ApiConfig, private fetchImpl: typeof fetch = fetch) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.config.token) {
      headers["Authorization"] = `Bearer ${this.config.token}`;
    }
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.config.baseUrl}${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const detail = (body as { detail?: { code?: string; message?: string } })?.detail;
      const error = new Error(detail?.message ?? `HTTP ${response.status}`);
      (error as Error & { code?: string; status?: number }).code =
        detail?.code ?? `HTTP_${response.status}`;
      (error as Error & { code?: string; status?: number }).status = response.status;
      throw error;
    }
    return body as T;
  }

  query(question: string, planner = "rules"): Promise<QueryResponse> {
    return this.request<QueryResponse>("/api/v1/query", {
      method: "POST",
      body: JSON.stringify({ question, planner }),
    });
  }

  channels(): Promise<{ channels: { name: string; first_ts: number; last_ts: number }[] }> {
    return this.request("/api/v1/channels");
  }

  series(channel: string, from: number, to: number, maxPoints = 1200): Promise<SeriesData> {
    const params = new URLSearchParams({
      from: String(from),
      to: String(to),
      max_points: String(maxPoints),
    });
    return this.request(`/api/v1/series/${encodeURIComponent(channel)}?${params}`);
  }

  samples(status?: string): Promise<{ samples: SampleSummary[] }> {
    const suffix = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.request(`/api/v1/bench/samples${suffix}`);
  }

  sample(id: string): Promise<SampleDetail> {
    return this.request(`/api/v1/bench/samples/${encodeURIComponent(id)}`);
  }

  postVerdict(
    id: string,
    status: "ACCEPTED" | "REJECTED",
    reason?: string,
    reviewer?: string,
  ): Promise<{ verdict: { status: string }; idempotent: boolean }> {
    return this.request(`/api/v1/bench/samples/${encodeURIComponent(id)}/verdict`, {
      method: "POST",
      body: JSON.stringify({ status, reason, reviewer }),
    });
  }

  experiences(): Promise<{ experiences: { id: number; text: string }[] }> {
    return this.request("/api/v1/experiences");
  }

  latestResults(): Promise<Record<string, unknown>> {
    return this.request("/api/v1/results/latest");
  }
}

export function defaultConfig(): ApiConfig {
  const stored =
    typeof localStorage !== "undefined" ? localStorage.getItem("tsquery.token") : null;
  return { baseUrl: "", token: stored ?? undefined };
}
