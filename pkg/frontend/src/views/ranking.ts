import type { RankResponse } from "../types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * Rank-ordered list of the submitted drafts. Scores are relative model
 * scores, never absolute CTRs, and the view says so.
 */
export function renderRanking(
  response: RankResponse,
  draftsById: Record<string, string>,
  stale: boolean,
): string {
  const rows = [...response.scored]
    .sort((a, b) => a.rank - b.rank)
    .map((v) => {
      const text = draftsById[v.id] ?? v.id;
      return (
        `<tr data-variant="${escapeHtml(v.id)}">` +
        `<td class="rank">${v.rank}</td>` +
        `<td class="text">${escapeHtml(text)}</td>` +
        `<td class="score">${v.score >= 0 ? "+" : ""}${v.score.toFixed(6)}</td>` +
        `</tr>`
      );
    })
    .join("");
  const staleBadge = stale
    ? `<span class="stale-badge">stale: drafts edited since this ranking</span>`
    : "";
  return `
<section class="ranking">
  <h2>Predicted ranking ${staleBadge}</h2>
  <p class="note">Relative scores from the ranker; not absolute CTRs.</p>
  <table>
    <thead><tr><th>rank</th><th>draft</th><th>relative score</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
</section>`;
}
