/** In-memory stand-in for the HTTP service, faithful to the documented
 * endpoint semantics the UI depends on: one pending query at a time,
 * 409 on labeling anything but the pending query, and state counts
 * that only the service mutates. */

import type { FetchLike, Prediction } from "../src/api.js";

interface FakeSessionSeed {
  id: string;
  pool: [string, string][];
  texts: Record<string, string>;
  labeled: number;
}

export class FakeService {
  readonly calls: string[] = [];
  private pending: [string, string] | null = null;
  private pool: [string, string][];
  private labeled: number;
  private iteration = 0;
  readonly acceptedLabels: { pair: [string, string]; type: string }[] = [];

  constructor(
    private readonly session: FakeSessionSeed,
    private readonly runs: Record<string, { status: string; predictions: Prediction[] }> = {},
  ) {
    this.pool = [...session.pool];
    this.labeled = session.labeled;
  }

  private state(): object {
    return {
      id: this.session.id,
      iteration: this.iteration,
      labeled: this.labeled,
      unlabeled: this.pool.length,
      complete: this.pool.length === 0 && this.pending === null,
      pending: this.pending,
      thresholds: [0.6, 0.9],
      oracle: "human_api",
    };
  }

  fetch: FetchLike = async (url, init) => {
    this.calls.push(`${init?.method ?? "GET"} ${url}`);
    const sessionBase = `/al/sessions/${this.session.id}`;

    if (url.endsWith(`${sessionBase}/next`)) {
      if (this.pending === null && this.pool.length > 0) {
        this.pending = this.pool[0] ?? null;
      }
      if (this.pending === null) {
        return json({ none: true, complete: this.pool.length === 0 });
      }
      const [a, b] = this.pending;
      return json({
        pair: this.pending,
        texts: { [a]: this.session.texts[a], [b]: this.session.texts[b] },
        confidence: 0.42,
        votes: ["requires", "none", null],
      });
    }

    if (url.endsWith(`${sessionBase}/label`)) {
      const body = JSON.parse(String(init?.body ?? "{}")) as {
        pair: [string, string];
        type: string;
      };
      if (
        this.pending === null ||
        body.pair[0] !== this.pending[0] ||
        body.pair[1] !== this.pending[1]
      ) {
        return json({ detail: `no pending oracle query for pair ${body.pair}` }, 409);
      }
      this.pool = this.pool.filter(
        (p) => !(p[0] === body.pair[0] && p[1] === body.pair[1]),
      );
      this.pending = null;
      this.labeled += 1;
      this.iteration += 1;
      this.acceptedLabels.push({ pair: body.pair, type: body.type });
      return json(this.state());
    }

    if (url.endsWith(`${sessionBase}/state`)) {
      return json(this.state());
    }

    const runMatch = url.match(/\/runs\/([^/]+)(\/predictions)?$/);
    if (runMatch) {
      const run = this.runs[runMatch[1] ?? ""];
      if (run === undefined) {
        return json({ detail: "unknown run" }, 404);
      }
      if (runMatch[2]) {
        const text = run.predictions.map((p) => JSON.stringify(p)).join("\n");
        return new Response(text, { status: 200 });
      }
      return json({ run_id: runMatch[1], corpus_id: "c1", method: "tfidf", status: run.status });
    }

    return json({ detail: `unhandled ${url}` }, 404);
  };
}

function json(body: object, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
