/** View-model for one labeling session.
 *
 * All state is derived from service responses; refreshing the page and
 * replaying fetchNext/refreshState reproduces the exact same view.
 */

import {
  ApiError,
  DIRECTED_TYPES,
  Direction,
  NextResponse,
  PendingQuery,
  RelationTypeName,
  ServiceClient,
  SessionState,
} from "./api.js";

export type Phase = "idle" | "query" | "complete" | "waiting" | "error";

export interface FormSelection {
  type: RelationTypeName | null;
  direction: Direction | null;
}

export interface SessionSnapshot {
  phase: Phase;
  query: PendingQuery | null;
  state: SessionState | null;
  selection: FormSelection;
  submitEnabled: boolean;
  lastError: string | null;
  conflict: boolean;
}

export class SessionViewModel {
  private phase: Phase = "idle";
  private query: PendingQuery | null = null;
  private state: SessionState | null = null;
  private selection: FormSelection = { type: null, direction: null };
  private lastError: string | null = null;
  private conflict = false;

  constructor(
    private readonly client: ServiceClient,
    readonly sessionId: string,
  ) {}

  snapshot(): SessionSnapshot {
    return {
      phase: this.phase,
      query: this.query,
      state: this.state,
      selection: { ...this.selection },
      submitEnabled: this.submitEnabled(),
      lastError: this.lastError,
      conflict: this.conflict,
    };
  }

  /** Submit stays disabled until a type is chosen, and a directed type
   * additionally needs a direction. */
  submitEnabled(): boolean {
    if (this.phase !== "query" || this.selection.type === null) {
      return false;
    }
    if (DIRECTED_TYPES.has(this.selection.type)) {
      return this.selection.direction !== null;
    }
    return true;
  }

  choose(type: RelationTypeName | null, direction: Direction | null = null): void {
    this.selection = { type, direction };
  }

  async refreshState(): Promise<SessionState> {
    this.state = await this.client.sessionState(this.sessionId);
    return this.state;
  }

  async fetchNext(): Promise<SessionSnapshot> {
    try {
      const next: NextResponse = await this.client.fetchNext(this.sessionId);
      if ("none" in next) {
        this.query = null;
        this.phase = next.complete ? "complete" : "waiting";
      } else {
        this.query = next;
        this.phase = "query";
      }
      this.selection = { type: null, direction: null };
      this.conflict = false;
      this.lastError = null;
      await this.refreshState();
    } catch (error) {
      this.phase = "error";
      this.lastError = error instanceof Error ? error.message : String(error);
    }
    return this.snapshot();
  }

  async submit(): Promise<SessionSnapshot> {
    if (!this.submitEnabled() || this.query === null || this.selection.type === null) {
      throw new Error("submit called while disabled");
    }
    const { pair } = this.query;
    try {
      this.state = await this.client.submitLabel(
        this.sessionId,
        pair,
        this.selection.type,
        this.selection.direction ?? undefined,
      );
      this.query = null;
      this.phase = "idle";
      this.conflict = false;
      this.lastError = null;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // someone (or a double click) labeled this query already:
        // surface the conflict and move on to the next query
        this.conflict = true;
        this.query = null;
        this.phase = "idle";
        await this.refreshState();
      } else {
        this.phase = "error";
        this.lastError = error instanceof Error ? error.message : String(error);
      }
    }
    return this.snapshot();
  }
}
