/**
 * Benchmark review queue: pending samples, detail view with raw/injected
 * overlays, accept/reject verdicts, keyboard-driven advancement.
 * Queue-state transitions are pure functions so they can be unit-tested.
 */

import { ApiClient } from "./api.js";
import { draw } from "./chart.js";
import { renderAnswer } from "./format.js";
import type { SampleDetail, SampleSummary } from "./types.js";

export interface QueueState {
  samples: SampleSummary[];
  currentId: string | null;
}

/** Next PENDING sample after the given one (wrapping), or null. */
export function nextPendingId(state: QueueState, afterId?: string | null): string | null {
  const pending = state.samples.filter((s) => s.status === "PENDING");
  if (pending.length === 0) return null;
  const anchor = afterId ?? state.currentId;
  if (!anchor) return pending[0].id;
  const ids = pending.map((p) => p.id);
  const at = ids.indexOf(anchor);
  if (at === -1) {
    // anchor just left the queue: first pending after its sort position
    const later = pending.find((p) => p.id > anchor);
    return (later ?? pending[0]).id;
  }
  return ids[(at + 1) % ids.length];
}

/** Apply a verdict locally so the list reflects the server without refetch. */
export function applyVerdict(state: QueueState, id: string, status: string): QueueState {
  return {
    samples: state.samples.map((s) => (s.id === id ? { ...s, status } : s)),
    currentId: state.currentId,
  };
}

export function verdictSubmittable(status: "ACCEPTED" | "REJECTED", reason: string): boolean {
  return status === "ACCEPTED" || reason.trim().length > 0;
}

export class ReviewView {
  private state: QueueState = { samples: [], currentId: null };
  private detail: SampleDetail | null = null;

  constructor(private api: ApiClient, private root: HTMLElement) {}

  async mount(): Promise<void> {
    this.root.innerHTML = `
      <div class="review-layout">
        <aside id="review-list" class="review-list"></aside>
        <section id="review-detail" class="review-detail">
          <p class="muted">Select a sample (or press n).</p>
        </section>
      </div>`;
    document.addEventListener("keydown", (ev) => this.onKey(ev));
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const { samples } = await this.api.samples();
    this.state = { samples, currentId: this.state.currentId };
    this.renderList();
    if (!this.state.currentId) {
      const first = nextPendingId(this.state);
      if (first) await this.open(first);
    }
  }

  private renderList(): void {
    const list = this.root.querySelector("#review-list");
    if (!list) return;
    const pending = this.state.samples.filter((s) => s.status === "PENDING").length;
    list.innerHTML =
      `<h3>Samples <span class="muted">(${pending} pending)</span></h3>` +
      this.state.samples
        .map(
          (s) => `
        <button class="sample-row ${s.status.toLowerCase()} ${
            s.id === this.state.currentId ? "current" : ""
          }" data-id="${s.id}">
          <span class="badge">${s.task_type}</span>
          <span class="sample-id">${s.id}</span>
          <span class="status">${s.status}</span>
        </button>`,
        )
        .join("");
    list.querySelectorAll<HTMLButtonElement>(".sample-row").forEach((btn) => {
      btn.addEventListener("click", () => void this.open(btn.dataset.id!));
    });
  }

  async open(id: string): Promise<void> {
    this.detail = await this.api.sample(id);
    this.state.currentId = id;
    this.renderList();
    this.renderDetail();
  }

  private renderDetail(): void {
    const host = this.root.querySelector("#review-detail");
    if (!host || !this.detail) return;
    const inst = this.detail.instance;
    const truth = renderAnswer(inst.ground_truth);
    host.innerHTML = `
      <h3>${inst.id} <span class="badge">${inst.task_type} / L${inst.level}</span>
        <span class="status">${this.detail.status}</span></h3>
      <p class="question">${escapeHtml(inst.question)}</p>
      <p class="muted">ground truth (${truth.kind}): ${escapeHtml(truth.headline)}</p>
      ${truth.lines.length ? `<pre class="truth-lines">${escapeHtml(truth.lines.join("\n"))}</pre>` : ""}
      <h4>Global context</h4>
      <canvas id="review-chart-global" class="chart"></canvas>
      <h4>Injection window (zoomed)</h4>
      <canvas id="review-chart-zoom" class="chart"></canvas>
      <div class="verdict-bar">
        <input id="verdict-reason" placeholder="rejection reason (required for reject)" />
        <button id="verdict-accept">Accept (a)</button>
        <button id="verdict-reject" disabled>Reject (r)</button>
        <button id="verdict-next">Next pending (n)</button>
        <span id="verdict-note" class="muted"></span>
      </div>`;

    const globalCanvas = host.querySelector<HTMLCanvasElement>("#review-chart-global")!;
    draw(globalCanvas, {
      series: this.detail.chart.raw,
      highlights: this.detail.chart.truth_highlights,
      overlay: null,
    });
    const zoomCanvas = host.querySelector<HTMLCanvasElement>("#review-chart-zoom")!;
    this.drawZoom(zoomCanvas);

    const reason = host.querySelector<HTMLInputElement>("#verdict-reason")!;
    const reject = host.querySelector<HTMLButtonElement>("#verdict-reject")!;
    reason.addEventListener("input", () => {
      reject.disabled = !verdictSubmittable("REJECTED", reason.value);
    });
    host.querySelector("#verdict-accept")!.addEventListener("click", () =>
      void this.submit("ACCEPTED"),
    );
    reject.addEventListener("click", () => void this.submit("REJECTED"));
    host.querySelector("#verdict-next")!.addEventListener("click", () => void this.advance());
  }

  private drawZoom(canvas: HTMLCanvasElement): void {
    if (!this.detail) return;
    const { raw, injected, truth_highlights } = this.detail.chart;
    const windows = truth_highlights.windows;
    if (windows.length === 0) {
      draw(canvas, { series: raw, overlay: injected });
      return;
    }
    const lo = Math.min(...windows.map((w) => w.start));
    const hi = Math.max(...windows.map((w) => w.end));
    const pad = Math.max(3600, Math.round((hi - lo) * 0.5));
    const within = raw.timestamps
      .map((t, i) => ({ t, v: raw.values[i] }))
      .filter((p) => p.t >= lo - pad && p.t <= hi + pad);
    const zoomSeries = {
      timestamps: within.map((p) => p.t),
      values: within.map((p) => p.v),
      total_points: within.length,
    };
    draw(canvas, { series: zoomSeries, highlights: truth_highlights, overlay: injected });
  }

  private async submit(status: "ACCEPTED" | "REJECTED"): Promise<void> {
    if (!this.state.currentId) return;
    const host = this.root.querySelector("#review-detail")!;
    const reason = host.querySelector<HTMLInputElement>("#verdict-reason")?.value ?? "";
    const note = host.querySelector("#verdict-note")!;
    if (!verdictSubmittable(status, reason)) {
      note.textContent = "a rejection needs a reason";
      return;
    }
    try {
      await this.api.postVerdict(this.state.currentId, status, reason || undefined, "ui");
      this.state = applyVerdict(this.state, this.state.currentId, status);
      this.renderList();
      await this.advance();
    } catch (err) {
      const e = err as Error & { status?: number };
      if (e.status === 409) {
        note.textContent = "already finalized elsewhere; refreshing";
        await this.refresh();
      } else {
        note.textContent = e.message;
      }
    }
  }

  private async advance(): Promise<void> {
    const next = nextPendingId(this.state, this.state.currentId);
    if (next) {
      await this.open(next);
    } else {
      const host = this.root.querySelector("#review-detail")!;
      host.innerHTML = `<p class="muted">Queue clear: no pending samples.</p>`;
      this.state.currentId = null;
      this.renderList();
    }
  }

  private onKey(ev: KeyboardEvent): void {
    if ((ev.target as HTMLElement)?.tagName === "INPUT") return;
    if (!this.root.isConnected || this.root.hidden) return;
    if (ev.key === "a") void this.submit("ACCEPTED");
    else if (ev.key === "r") {
      const reason = this.root.querySelector<HTMLInputElement>("#verdict-reason");
      reason?.focus();
    } else if (ev.key === "n") void this.advance();
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;");
}
