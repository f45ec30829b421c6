/**
 * Interactive query console: submit a question, render the answer by kind,
 * shade the chart with the result, and expose the full execution trace
 * (plan, candidate counts, fallback, retries) for auditability.
 */

import { ApiClient } from "./api.js";
import { draw } from "./chart.js";
import { describeAttempt, highlightSummary, renderAnswer } from "./format.js";
import type { QueryResponse } from "./types.js";

export class ConsoleView {
  private history: string[] = [];

  constructor(private api: ApiClient, private root: HTMLElement) {}

  mount(): void {
    this.root.innerHTML = `
      <form id="query-form" class="query-form">
        <input id="query-input" placeholder="Ask about your series: maximum value, shapes, anomalies..."
               autocomplete="off" />
        <select id="query-planner">
          <option value="rules">rule planner</option>
          <option value="llm">model planner</option>
        </select>
        <button type="submit">Run</button>
      </form>
      <div id="query-history" class="history"></div>
      <div id="query-result"></div>`;
    const form = this.root.querySelector<HTMLFormElement>("#query-form")!;
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const input = this.root.querySelector<HTMLInputElement>("#query-input")!;
      const planner = this.root.querySelector<HTMLSelectElement>("#query-planner")!.value;
      if (input.value.trim()) void this.run(input.value.trim(), planner);
    });
  }

  private renderHistory(): void {
    const host = this.root.querySelector("#query-history")!;
    host.innerHTML = this.history
      .slice(-8)
      .map((q) => `<button class="history-chip">${escapeHtml(q)}</button>`)
      .join("");
    host.querySelectorAll<HTMLButtonElement>(".history-chip").forEach((chip, i) => {
      chip.addEventListener("click", () => {
        const input = this.root.querySelector<HTMLInputElement>("#query-input")!;
        input.value = this.history.slice(-8)[i];
      });
    });
  }

  async run(question: string, planner: string): Promise<void> {
    const result = this.root.querySelector("#query-result")!;
    result.innerHTML = `<p class="muted">running…</p>`;
    this.history.push(question);
    this.renderHistory();
    let response: QueryResponse;
    try {
      response = await this.api.query(question, planner);
    } catch (err) {
      const e = err as Error & { code?: string };
      result.innerHTML = `
        <div class="error-card">
          <strong>${escapeHtml(e.code ?? "ERROR")}</strong>
          <span>${escapeHtml(e.message)}</span>
        </div>`;
      return;
    }
    this.renderResult(response);
  }

  private renderResult(response: QueryResponse): void {
    const result = this.root.querySelector("#query-result")!;
    const parts: string[] = [];

    if (response.answer) {
      const rendered = renderAnswer(response.answer);
      parts.push(`
        <div class="answer-card ${rendered.raw ? "answer-raw" : ""}">
          <span class="badge">${rendered.kind}</span>
          <strong class="answer-headline">${escapeHtml(rendered.headline)}</strong>
          ${rendered.lines.length
            ? `<pre class="answer-lines">${escapeHtml(rendered.lines.join("\n"))}</pre>`
            : ""}
        </div>`);
    } else if (response.error) {
      parts.push(`
        <div class="error-card">
          <strong>${escapeHtml(response.error.code)}</strong>
          <span>${escapeHtml(response.error.message)}</span>
        </div>`);
    }

    if (response.plot_data) {
      parts.push(`<canvas id="console-chart" class="chart"></canvas>`);
      const chips = response.highlights ? highlightSummary(response.highlights) : [];
      if (chips.length) {
        parts.push(
          `<div class="chips">${chips.map((c) => `<span class="chip">${escapeHtml(c)}</span>`).join("")}</div>`,
        );
      }
    }

    const attempts = response.trace?.attempts ?? [];
    parts.push(`
      <details class="trace" open>
        <summary>Execution trace · ${attempts.length} attempt(s),
          ${response.trace?.retries_used ?? 0} retr${(response.trace?.retries_used ?? 0) === 1 ? "y" : "ies"}</summary>
        <ol>
          ${attempts
            .map(
              (a) => `<li><code>${escapeHtml(describeAttempt(a))}</code>
                <div class="steps">${a.steps
                  .map((s) => `<span class="chip">${s.op}@${s.binding}</span>`)
                  .join("")}</div></li>`,
            )
            .join("")}
        </ol>
        <details><summary>plan</summary>
          <pre>${escapeHtml(JSON.stringify(response.plan, null, 2))}</pre></details>
      </details>`);

    result.innerHTML = parts.join("\n");

    const canvas = result.querySelector<HTMLCanvasElement>("#console-chart");
    if (canvas && response.plot_data) {
      draw(canvas, {
        series: response.plot_data,
        highlights: response.highlights ?? { windows: [], timestamps: [] },
      });
    }
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;");
}
