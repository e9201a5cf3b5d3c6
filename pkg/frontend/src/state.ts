import type {
  InsightsResponse,
  OpportunitiesResponse,
  RankResponse,
  VariantIn,
} from "./types.js";

export interface HistoryEntry {
  drafts: string[];
  rank: RankResponse;
}

// Client-side session only: drafts being edited, the latest responses with
// staleness tracking (any edit after a submit marks views stale), and the
// compare-across-edits history. No quantitative computation happens here.
export class SessionState {
  drafts: string[] = ["", ""];
  lastRank: RankResponse | null = null;
  lastInsights: InsightsResponse | null = null;
  lastOpportunities: OpportunitiesResponse | null = null;
  history: HistoryEntry[] = [];
  private submittedDrafts: string[] | null = null;

  setDraft(index: number, text: string): void {
    if (index < 0 || index >= this.drafts.length) return;
    this.drafts[index] = text;
  }

  addDraft(text = ""): number {
    this.drafts.push(text);
    return this.drafts.length - 1;
  }

  removeDraft(index: number): void {
    if (this.drafts.length <= 2) return; // keep a submittable minimum
    this.drafts.splice(index, 1);
  }

  /** Drafts ready to send, with client-side validation. */
  variants(): VariantIn[] | null {
    const nonEmpty = this.drafts.map((t) => t.trim()).filter((t) => t.length > 0);
    if (nonEmpty.length < 2) return null;
    return nonEmpty.map((text, i) => ({ id: `draft${i + 1}`, text }));
  }

  markRanked(response: RankResponse): void {
    if (this.lastRank) {
      this.history.unshift({ drafts: this.submittedDrafts ?? [], rank: this.lastRank });
    }
    this.lastRank = response;
    this.submittedDrafts = this.drafts.map((t) => t.trim()).filter((t) => t.length > 0);
  }

  markInsights(response: InsightsResponse): void {
    this.lastInsights = response;
  }

  markOpportunities(response: OpportunitiesResponse): void {
    this.lastOpportunities = response;
  }

  /** A view is stale when the drafts changed after its response arrived. */
  isStale(): boolean {
    if (!this.submittedDrafts) return false;
    const current = this.drafts.map((t) => t.trim()).filter((t) => t.length > 0);
    return JSON.stringify(current) !== JSON.stringify(this.submittedDrafts);
  }

  /**
   * Selecting an opportunity pre-fills a new editable draft referencing the
   * suggestion's example copy, feeding the analyst's next submit.
   */
  applySuggestion(attribute: string, example: string | null): number {
    const stub = example && example.length > 0 ? example : `(${attribute}) `;
    return this.addDraft(stub);
  }
}
