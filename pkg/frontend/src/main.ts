import * as api from "./api.js";
import { SessionState } from "./state.js";
import { renderContributions } from "./views/contributions.js";
import { renderOpportunities } from "./views/opportunities.js";
import { escapeHtml, renderRanking } from "./views/ranking.js";

const state = new SessionState();

// latest-wins: one in-flight request per panel
const inflight: Record<string, AbortController | null> = {
  rank: null,
  insights: null,
  opportunities: null,
};

function panel(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing panel #${id}`);
  return el;
}

function banner(message: string, retry?: () => void): void {
  const el = panel("banner");
  el.innerHTML = message
    ? `<div class="banner">${escapeHtml(message)} ${retry ? '<button data-action="retry">retry</button>' : ""}</div>`
    : "";
  if (retry) {
    el.querySelector('[data-action="retry"]')?.addEventListener("click", retry);
  }
}

function renderDrafts(): void {
  const rows = state.drafts
    .map(
      (text, i) => `
<div class="draft-row">
  <textarea data-draft="${i}" rows="2" placeholder="variant copy...">${escapeHtml(text)}</textarea>
  <button data-action="remove-draft" data-index="${i}" title="remove">×</button>
</div>`,
    )
    .join("");
  panel("drafts").innerHTML = `
    ${rows}
    <div class="draft-actions">
      <button data-action="add-draft">+ add draft</button>
      <button data-action="submit" class="primary">Rank drafts</button>
      <span id="draft-error" class="inline-error"></span>
    </div>`;
}

function renderHistory(): void {
  if (state.history.length === 0) {
    panel("history").innerHTML = "";
    return;
  }
  const entries = state.history
    .slice(0, 5)
    .map((entry, idx) => {
      const top = [...entry.rank.scored].sort((a, b) => a.rank - b.rank)[0];
      const text = entry.drafts[parseInt(top.id.replace("draft", ""), 10) - 1] ?? top.id;
      return `<li>#${idx + 1} ago — best: ${escapeHtml(text)} (${top.score.toFixed(4)})</li>`;
    })
    .join("");
  panel("history").innerHTML = `<h3>Previous submissions</h3><ul>${entries}</ul>`;
}

function rerenderResults(): void {
  const stale = state.isStale();
  if (state.lastRank) {
    const byId: Record<string, string> = {};
    state.lastRank.scored.forEach((v, i) => {
      byId[v.id] = state.drafts.filter((t) => t.trim())[i] ?? v.id;
    });
    panel("ranking").innerHTML = renderRanking(state.lastRank, byId, stale);
  }
  if (state.lastInsights) {
    panel("contributions").innerHTML = renderContributions(state.lastInsights);
  }
  if (state.lastOpportunities) {
    panel("opportunities").innerHTML = renderOpportunities(state.lastOpportunities);
  }
  renderHistory();
}

function inlineError(message: string): void {
  const el = document.getElementById("draft-error");
  if (el) el.textContent = message;
}

async function submit(): Promise<void> {
  inlineError("");
  const variants = state.variants();
  if (!variants) {
    inlineError("need at least 2 non-empty drafts");
    return;
  }
  inflight.rank?.abort();
  const controller = new AbortController();
  inflight.rank = controller;
  try {
    const response = await api.rank(variants, controller.signal);
    state.markRanked(response);
    banner("");
    rerenderResults();
    void refreshOpportunities(variants);
  } catch (error) {
    if (error instanceof DOMException && error.name === "AbortError") return;
    if (error instanceof api.ServiceError && error.status === 400) {
      inlineError(typeof error.detail === "string" ? error.detail : "request rejected (400)");
    } else {
      banner("scoring service unreachable", () => void submit());
    }
  } finally {
    if (inflight.rank === controller) inflight.rank = null;
  }
}

async function refreshOpportunities(variants: { id: string; text: string }[]): Promise<void> {
  inflight.opportunities?.abort();
  const controller = new AbortController();
  inflight.opportunities = controller;
  try {
    const response = await api.opportunities(variants, null, 3, false, controller.signal);
    state.markOpportunities(response);
    rerenderResults();
  } catch (error) {
    if (error instanceof DOMException && error.name === "AbortError") return;
    // opportunity panel failing is non-fatal; leave the last view in place
  } finally {
    if (inflight.opportunities === controller) inflight.opportunities = null;
  }
}

function wireEvents(): void {
  document.body.addEventListener("input", (event) => {
    const target = event.target as HTMLElement;
    const index = target.dataset.draft;
    if (index !== undefined && target instanceof HTMLTextAreaElement) {
      state.setDraft(parseInt(index, 10), target.value);
      rerenderResults(); // staleness marker updates live
    }
  });
  document.body.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]") as HTMLElement | null;
    if (!target) return;
    switch (target.dataset.action) {
      case "add-draft":
        state.addDraft();
        renderDrafts();
        break;
      case "remove-draft":
        state.removeDraft(parseInt(target.dataset.index ?? "-1", 10));
        renderDrafts();
        rerenderResults();
        break;
      case "submit":
        void submit();
        break;
      case "use-suggestion": {
        const index = state.applySuggestion(
          target.dataset.attribute ?? "",
          target.dataset.example ?? null,
        );
        renderDrafts();
        rerenderResults();
        document
          .querySelector<HTMLTextAreaElement>(`[data-draft="${index}"]`)
          ?.focus();
        break;
      }
    }
  });
}

async function start(): Promise<void> {
  renderDrafts();
  wireEvents();
  if (!(await api.health())) {
    banner("scoring service unreachable; set ?service=http://host:port", () => void start());
  }
}

void start();
