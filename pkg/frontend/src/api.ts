/**
 * Typed client for the review service. The server is the single source of
 * truth: the UI never persists verdicts anywhere else.
 */

export type Verdict = "accept" | "reject";

export interface Scores {
  byte_length?: number;
  border_variance?: number | null;
  transparency_score?: number | null;
  convexity_score?: number | null;
}

export interface Candidate {
  id: string;
  thumbnail_url: string;
  scores: Scores;
  verdict: Verdict | null;
}

export interface CandidatePage {
  items: Candidate[];
  page: number;
  page_size: number;
  total: number;
  total_candidates: number;
  undecided: number;
  guidance?: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly base: string = "",
    fetchFn?: FetchLike,
  ) {
    // bind lazily so the browser's fetch keeps its window receiver
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async listCandidates(status: string, page: number, pageSize: number): Promise<CandidatePage> {
    const params = new URLSearchParams({
      status,
      page: String(page),
      page_size: String(pageSize),
    });
    const res = await this.fetchFn(`${this.base}/api/candidates?${params.toString()}`);
    if (!res.ok) {
      throw new Error(`listing candidates failed with status ${res.status}`);
    }
    return (await res.json()) as CandidatePage;
  }

  async postDecision(candidateId: string, verdict: Verdict, reviewer: string): Promise<void> {
    const res = await this.fetchFn(`${this.base}/api/decisions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ candidate_id: candidateId, verdict, reviewer }),
    });
    if (!res.ok) {
      throw new Error(`posting decision failed with status ${res.status}`);
    }
  }

  async fetchExport(): Promise<string> {
    const res = await this.fetchFn(`${this.base}/api/export`);
    if (!res.ok) {
      throw new Error(`export failed with status ${res.status}`);
    }
    return res.text();
  }
}
