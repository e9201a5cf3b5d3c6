import type {
  ArmIn,
  InsightsResponse,
  OpportunitiesResponse,
  RankResponse,
  VariantIn,
} from "./types.js";

// Service URL resolution: ?service=... query param wins, then a value saved
// in localStorage, then same-origin (useful when proxied).
export function serviceUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  if (fromQuery) {
    localStorage.setItem("copyrank.service", fromQuery);
    return fromQuery;
  }
  return localStorage.getItem("copyrank.service") ?? "";
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`service returned ${status}`);
  }
}

async function post<T>(path: string, body: unknown, signal?: AbortSignal): Promise<T> {
  const response = await fetch(`${serviceUrl()}${path}`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
    signal,
  });
  if (!response.ok) {
    let detail: unknown = null;
    try {
      detail = (await response.json()).detail;
    } catch {
      // non-JSON error body; keep detail null
    }
    throw new ServiceError(response.status, detail);
  }
  return (await response.json()) as T;
}

export function rank(variants: VariantIn[], signal?: AbortSignal): Promise<RankResponse> {
  return post<RankResponse>("/rank", { variants }, signal);
}

export function insights(
  arms: ArmIn[],
  k = 3,
  narrate = false,
  signal?: AbortSignal,
): Promise<InsightsResponse> {
  return post<InsightsResponse>("/insights", { arms, k, narrate }, signal);
}

export function opportunities(
  variants: VariantIn[],
  historyMeans: number[] | null = null,
  k = 3,
  narrate = false,
  signal?: AbortSignal,
): Promise<OpportunitiesResponse> {
  return post<OpportunitiesResponse>(
    "/opportunities",
    { variants, history_means: historyMeans, k, narrate },
    signal,
  );
}

export async function health(): Promise<boolean> {
  try {
    const response = await fetch(`${serviceUrl()}/health`);
    return response.ok;
  } catch {
    return false;
  }
}
