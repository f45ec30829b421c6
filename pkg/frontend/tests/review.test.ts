import { describe, expect, it } from "vitest";

import { applyVerdict, nextPendingId, verdictSubmittable, type QueueState } from "../src/review.js";

function sample(id: string, status = "PENDING") {
  return { id, task_type: "SI", level: 2, question: "q", status, snr: 2.0 };
}

describe("review queue", () => {
  const state: QueueState = {
    samples: [sample("a"), sample("b", "ACCEPTED"), sample("c"), sample("d")],
    currentId: "a",
  };

  it("advances to the next pending sample, wrapping", () => {
    expect(nextPendingId(state, "a")).toBe("c");
    expect(nextPendingId(state, "c")).toBe("d");
    expect(nextPendingId(state, "d")).toBe("a");
  });

  it("handles an anchor that just left the queue", () => {
    const after = applyVerdict(state, "a", "REJECTED");
    expect(nextPendingId(after, "a")).toBe("c");
  });

  it("returns null when the queue is clear", () => {
    const done: QueueState = {
      samples: [sample("a", "ACCEPTED"), sample("b", "REJECTED")],
      currentId: null,
    };
    expect(nextPendingId(done)).toBeNull();
  });

  it("applyVerdict flips only the targeted sample", () => {
    const after = applyVerdict(state, "c", "REJECTED");
    expect(after.samples.find((s) => s.id === "c")?.status).toBe("REJECTED");
    expect(after.samples.find((s) => s.id === "d")?.status).toBe("PENDING");
  });

  it("mirrors the server rule: reject needs a reason", () => {
    expect(verdictSubmittable("ACCEPTED", "")).toBe(true);
    expect(verdictSubmittable("REJECTED", "")).toBe(false);
    expect(verdictSubmittable("REJECTED", "  ")).toBe(false);
    expect(verdictSubmittable("REJECTED", "too noisy")).toBe(true);
  });
});
