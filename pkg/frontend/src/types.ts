// Response shapes of the copyrank service; every number shown in the UI
// traces back to one of these fields.

export interface ScoredVariant {
  id: string;
  score: number;
  rank: number;
}

export interface RankResponse {
  scored: ScoredVariant[];
  relative: boolean;
}

export interface Contribution {
  attribute: string;
  delta_score: number;
  contribution: number;
  polarity: number;
}

export interface InsightText {
  attribute: string;
  polarity: string | null;
  explanation: string;
  cited_phrases: string[];
  accepted: boolean;
}

export interface InsightsResponse {
  best_arm_id: string;
  worst_arm_id: string;
  contributions: Contribution[];
  selected: { attribute: string; polarity: string }[];
  totals: { explained: number; nuisance: number; predicted_gap: number };
  insights: InsightText[] | null;
  status: string;
}

export interface OpportunityRanking {
  attributes: string[];
  r_imp: number[];
  r_exp: number[];
  r_opp: number[];
  r_novel: number[] | null;
  expression: number[];
}

export interface Suggestion {
  attribute: string;
  rationale: string;
  examples: string[];
  learning_potential: string;
  conversion_potential: string;
}

export interface OpportunitiesResponse {
  ranking: OpportunityRanking;
  impact_bins: Record<string, string>;
  selected: string[];
  selection_status: string;
  suggestions: Suggestion[] | null;
  status: string;
}

export interface VariantIn {
  id: string;
  text: string;
}

export interface ArmIn extends VariantIn {
  impressions: number;
  clicks: number;
}
