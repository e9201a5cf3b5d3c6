import type { InsightsResponse } from "../types.js";
import { escapeHtml } from "./ranking.js";

const BAR_HALF_WIDTH = 220; // px per side of the zero line

export function formatSigned(value: number, digits = 4): string {
  const fixed = value.toFixed(digits);
  return value >= 0 ? `+${fixed}` : fixed;
}

/**
 * Signed horizontal bars of per-attribute contributions to the best-vs-worst
 * predicted CTR gap, sorted by magnitude, with the explained-vs-nuisance
 * split of the gap as a summary line. All numbers come straight from the
 * service response; the only arithmetic here is pixel scaling.
 */
export function renderContributions(response: InsightsResponse): string {
  const contributions = [...response.contributions].sort(
    (a, b) => Math.abs(b.contribution) - Math.abs(a.contribution),
  );
  if (contributions.length === 0) {
    return `<section class="contributions"><p class="empty">No contributions returned.</p></section>`;
  }
  const maxAbs = Math.max(...contributions.map((c) => Math.abs(c.contribution)), 1e-12);

  const bars = contributions
    .map((c) => {
      const width = (Math.abs(c.contribution) / maxAbs) * BAR_HALF_WIDTH;
      const negative = c.contribution < 0;
      const cls = negative ? "bar negative" : "bar positive";
      const side = negative
        ? `<div class="${cls}" style="width:${width.toFixed(1)}px;margin-left:${(BAR_HALF_WIDTH - width).toFixed(1)}px"></div><div class="spacer"></div>`
        : `<div class="spacer"></div><div class="${cls}" style="width:${width.toFixed(1)}px"></div>`;
      return (
        `<div class="bar-row" data-attribute="${escapeHtml(c.attribute)}">` +
        `<span class="label">${escapeHtml(c.attribute)}</span>` +
        `<div class="track">${side}</div>` +
        `<span class="value">${formatSigned(c.contribution)}</span>` +
        `</div>`
      );
    })
    .join("");

  const totals = response.totals;
  return `
<section class="contributions">
  <h2>Why "${escapeHtml(response.best_arm_id)}" beats "${escapeHtml(response.worst_arm_id)}"</h2>
  <div class="bars">${bars}</div>
  <p class="summary">
    Attribute contributions sum to <strong class="sum-label">${formatSigned(totals.explained)}</strong>
    of a <span class="gap-label">${formatSigned(totals.predicted_gap)}</span> predicted gap;
    the remaining <span class="nuisance-label">${formatSigned(totals.nuisance)}</span> lives outside the attribute space.
  </p>
</section>`;
}
