/** Thin typed client for the relation-extraction HTTP service.
 *
 * Every method maps 1:1 onto a documented endpoint; the UI never
 * computes truth of its own, it only renders what these calls return.
 */

export type RelationTypeName =
  | "none"
  | "requires"
  | "conflicts"
  | "contradicts"
  | "is_a_variant"
  | "is_similar"
  | "details";

/** Types whose reading is directional (source acts on target). */
export const DIRECTED_TYPES: ReadonlySet<RelationTypeName> = new Set([
  "requires",
  "conflicts",
  "details",
]);

export const ALL_TYPES: readonly RelationTypeName[] = [
  "none",
  "requires",
  "conflicts",
  "contradicts",
  "is_a_variant",
  "is_similar",
  "details",
];

export type Direction = "source_to_target" | "target_to_source";

export interface PendingQuery {
  pair: [string, string];
  texts: Record<string, string>;
  confidence: number;
  votes: (string | null)[];
}

export interface NoQuery {
  none: true;
  complete: boolean;
}

export type NextResponse = PendingQuery | NoQuery;

export interface SessionState {
  id: string;
  iteration: number;
  labeled: number;
  unlabeled: number;
  complete: boolean;
  pending: [string, string] | null;
  thresholds: [number, number];
  oracle: string;
}

export interface AuditEvent {
  iter: number;
  pair: [string, string];
  action: "auto_accepted" | "oracle_labeled";
  label: string;
  confidence: number;
  timestamp: number;
}

export interface RunDescriptor {
  run_id: string;
  corpus_id: string;
  method: string;
  status: "pending" | "running" | "done" | "failed";
  error?: string;
}

export interface Prediction {
  source: string;
  target: string;
  type: RelationTypeName;
  confidence: number;
  method: string;
  evidence: string[];
}

export interface MentionSummary {
  span: number[];
  type: string;
  canonical: string;
}

export interface PairView {
  texts: Record<string, string>;
  parses: Record<string, { tokens: number; mentions: MentionSummary[]; chunks: string[] }>;
  predictions: (Prediction & { run_id: string })[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof body === "object" && body !== null && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  fetchNext(sessionId: string): Promise<NextResponse> {
    return this.request(`/al/sessions/${sessionId}/next`);
  }

  submitLabel(
    sessionId: string,
    pair: [string, string],
    type: RelationTypeName,
    direction?: Direction,
  ): Promise<SessionState> {
    // The service stores the label on the pair in its pool orientation;
    // direction is carried along for the audit trail of directed types.
    return this.request(`/al/sessions/${sessionId}/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pair, type, ...(direction ? { direction } : {}) }),
    });
  }

  sessionState(sessionId: string): Promise<SessionState> {
    return this.request(`/al/sessions/${sessionId}/state`);
  }

  sessionAudit(sessionId: string): Promise<AuditEvent[]> {
    return this.request(`/al/sessions/${sessionId}/audit`);
  }

  run(runId: string): Promise<RunDescriptor> {
    return this.request(`/runs/${runId}`);
  }

  async runPredictions(runId: string): Promise<Prediction[]> {
    const response = await this.fetchImpl(`${this.baseUrl}/runs/${runId}/predictions`);
    if (!response.ok) {
      throw new ApiError(response.status, response.statusText);
    }
    const text = await response.text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as Prediction);
  }

  pairView(corpusId: string, a: string, b: string): Promise<PairView> {
    return this.request(`/pairs/${corpusId}/${a}/${b}`);
  }
}
