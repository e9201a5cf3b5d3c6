import type { OpportunitiesResponse, Suggestion } from "../types.js";
import { escapeHtml } from "./ranking.js";

function chip(kind: string, level: string): string {
  return `<span class="chip ${kind} level-${level.toLowerCase()}">${kind.replace("-", " ")}: ${level}</span>`;
}

function suggestionCard(s: Suggestion): string {
  const example = s.examples.length > 0 ? s.examples[0] : "";
  const examples = s.examples
    .map((e) => `<blockquote class="example">${escapeHtml(e)}</blockquote>`)
    .join("");
  return (
    `<div class="suggestion" data-attribute="${escapeHtml(s.attribute)}">` +
    `<h4>${escapeHtml(s.attribute)}</h4>` +
    `<p>${escapeHtml(s.rationale)}</p>` +
    examples +
    chip("conversion-potential", s.conversion_potential) +
    chip("learning-potential", s.learning_potential) +
    `<button data-action="use-suggestion" data-attribute="${escapeHtml(s.attribute)}" ` +
    `data-example="${escapeHtml(example)}">Draft from this</button>` +
    `</div>`
  );
}

/**
 * Opportunity panel: attributes ordered by opportunity index ascending
 * (important but under-expressed first), impact bin badges, and suggestion
 * cards with potential chips when narration was requested. Selecting a
 * suggestion emits a data-action button the app wires to a new draft stub.
 */
export function renderOpportunities(response: OpportunitiesResponse): string {
  if (response.selection_status === "no_opportunity") {
    return `
<section class="opportunities">
  <p class="empty">No positive-impact attributes are missing from these variants;
  nothing to suggest right now.</p>
</section>`;
  }
  const ranking = response.ranking;
  const order = ranking.attributes
    .map((name, i) => ({ name, i }))
    .sort((a, b) => ranking.r_opp[a.i] - ranking.r_opp[b.i]);

  const rows = order
    .map(({ name, i }) => {
      const novel = ranking.r_novel ? ranking.r_novel[i].toFixed(1) : "–";
      const bin = response.impact_bins[name] ?? "Weak";
      const selected = response.selected.includes(name) ? " selected" : "";
      return (
        `<tr class="opportunity-row${selected}" data-attribute="${escapeHtml(name)}">` +
        `<td>${escapeHtml(name)}</td>` +
        `<td class="num">${ranking.r_opp[i].toFixed(1)}</td>` +
        `<td class="num">${ranking.r_imp[i].toFixed(1)}</td>` +
        `<td class="num">${ranking.r_exp[i].toFixed(1)}</td>` +
        `<td class="num">${novel}</td>` +
        `<td><span class="badge impact-${bin.toLowerCase()}">${bin}</span></td>` +
        `</tr>`
      );
    })
    .join("");

  const suggestions = response.suggestions
    ? `<div class="suggestions">${response.suggestions.map(suggestionCard).join("")}</div>`
    : "";

  return `
<section class="opportunities">
  <h2>Opportunities</h2>
  <table>
    <thead><tr><th>attribute</th><th>R<sub>opp</sub></th><th>R<sub>imp</sub></th><th>R<sub>exp</sub></th><th>R<sub>novel</sub></th><th>impact</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  ${suggestions}
</section>`;
}
