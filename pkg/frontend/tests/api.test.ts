import { describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";

function mockFetch(status: number, body: unknown) {
  return vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  })) as unknown as typeof fetch;
}

describe("ApiClient", () => {
  it("posts queries with the bearer token", async () => {
    const impl = mockFetch(200, { answer: { kind: "SCALAR", payload: 1 }, trace: { attempts: [], retries_used: 0 } });
    const api = new ApiClient({ baseUrl: "http://x", token: "sekret" }, impl);
    const res = await api.query("q");
    expect(res.answer?.kind).toBe("SCALAR");
    const [url, init] = (impl as unknown as { mock: { calls: [string, RequestInit][] } }).mock.calls[0];
    expect(url).toBe("http://x/api/v1/query");
    expect((init.headers as Record<string, string>).Authorization).toBe("Bearer sekret");
    expect(JSON.parse(String(init.body))).toEqual({ question: "q", planner: "rules" });
  });

  it("surfaces machine codes from error envelopes", async () => {
    const impl = mockFetch(404, { detail: { code: "UNKNOWN_CHANNEL", message: "no channel" } });
    const api = new ApiClient({ baseUrl: "" }, impl);
    await expect(api.series("nope", 0, 10)).rejects.toMatchObject({
      code: "UNKNOWN_CHANNEL",
      status: 404,
    });
  });

  it("encodes series query parameters", async () => {
    const impl = mockFetch(200, { timestamps: [], values: [], total_points: 0 });
    const api = new ApiClient({ baseUrl: "" }, impl);
    await api.series("river a", 100, 200, 50);
    const [url] = (impl as unknown as { mock: { calls: [string][] } }).mock.calls[0];
    expect(url).toContain("/api/v1/series/river%20a?");
    expect(url).toContain("from=100");
    expect(url).toContain("max_points=50");
  });

  it("posts verdicts with reason and reviewer", async () => {
    const impl = mockFetch(200, { verdict: { status: "REJECTED" }, idempotent: false });
    const api = new ApiClient({ baseUrl: "" }, impl);
    const out = await api.postVerdict("id1", "REJECTED", "blurry", "qa");
    expect(out.verdict.status).toBe("REJECTED");
    const [, init] = (impl as unknown as { mock: { calls: [string, RequestInit][] } }).mock.calls[0];
    expect(JSON.parse(String(init.body))).toEqual({
      status: "REJECTED",
      reason: "blurry",
      reviewer: "qa",
    });
  });
});
