/**
 * Single-page shell: tab routing between the query console, the review
 * queue and the experience/results panels. All data comes from /api/v1.
 */

import { ApiClient, defaultConfig } from "./api.js";
import { ConsoleView } from "./console.js";
import { ReviewView } from "./review.js";

const api = new ApiClient(defaultConfig());

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

async function showExperiences(host: HTMLElement): Promise<void> {
  host.innerHTML = `<p class="muted">loading…</p>`;
  try {
    const { experiences } = await api.experiences();
    host.innerHTML = experiences.length
      ? `<ul class="experiences">${experiences
          .map((e) => `<li>${e.text.replaceAll("<", "&lt;")}</li>`)
          .join("")}</ul>`
      : `<p class="muted">No experiences accumulated yet.</p>`;
  } catch (err) {
    host.innerHTML = `<p class="muted">${(err as Error).message}</p>`;
  }
}

async function showResults(host: HTMLElement): Promise<void> {
  host.innerHTML = `<p class="muted">loading…</p>`;
  try {
    const results = await api.latestResults();
    const per = (results["per_family"] ?? {}) as Record<string, number>;
    const rows = Object.keys(per)
      .sort()
      .map((k) => `<tr><td>${k}</td><td>${per[k].toFixed(4)}</td></tr>`)
      .join("");
    host.innerHTML = `
      <table class="results">
        <thead><tr><th>family</th><th>mean score</th></tr></thead>
        <tbody>${rows}</tbody>
        <tfoot><tr><td>macro avg</td><td>${Number(results["macro_avg"] ?? 0).toFixed(4)}</td></tr></tfoot>
      </table>`;
  } catch (err) {
    host.innerHTML = `<p class="muted">No stored results yet (${(err as Error).message}).</p>`;
  }
}

function activate(tab: string): void {
  document.querySelectorAll<HTMLElement>(".panel").forEach((p) => {
    p.hidden = p.dataset.tab !== tab;
  });
  document.querySelectorAll<HTMLButtonElement>(".tab").forEach((b) => {
    b.classList.toggle("active", b.dataset.tab === tab);
  });
  if (tab === "experiences") void showExperiences(byId("panel-experiences"));
  if (tab === "results") void showResults(byId("panel-results"));
}

window.addEventListener("DOMContentLoaded", () => {
  const consoleView = new ConsoleView(api, byId("panel-console"));
  consoleView.mount();
  const reviewView = new ReviewView(api, byId("panel-review"));
  void reviewView.mount();

  document.querySelectorAll<HTMLButtonElement>(".tab").forEach((btn) => {
    btn.addEventListener("click", () => activate(btn.dataset.tab!));
  });
  activate("console");
});
