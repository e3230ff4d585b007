/**
 * Session state machine for one annotator.
 *
 * State is a pure function of API responses plus the in-flight action:
 * nothing is cached beyond the current triple and the undo stack, so a
 * page refresh (a fresh session) can never lose committed verdicts.
 */

import { isDone, type Progress, type ReviewApi, type TripleBundle } from "./api.js";

export type SessionPhase = "loading" | "reviewing" | "done";

export interface SessionView {
  phase: SessionPhase;
  current: TripleBundle | null;
  progress: Progress | null;
  canUndo: boolean;
  lastError: string | null;
}

export class ReviewSession {
  private phase: SessionPhase = "loading";
  private current: TripleBundle | null = null;
  private progress: Progress | null = null;
  private undoStack: string[] = [];
  private lastError: string | null = null;

  constructor(
    private readonly api: ReviewApi,
    readonly annotator: string,
  ) {}

  view(): SessionView {
    return {
      phase: this.phase,
      current: this.current,
      progress: this.progress,
      canUndo: this.undoStack.length > 0,
      lastError: this.lastError,
    };
  }

  /** Fetch the next unannotated triple from the server-side queue. */
  async loadNext(): Promise<SessionView> {
    this.phase = "loading";
    try {
      const response = await this.api.queue(this.annotator);
      this.lastError = null;
      if (isDone(response)) {
        this.phase = "done";
        this.current = null;
        this.progress = response.progress;
      } else {
        this.phase = "reviewing";
        this.current = response;
        this.progress = response.progress ?? null;
      }
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
      this.phase = this.current ? "reviewing" : "done";
    }
    return this.view();
  }

  /** Submit a verdict for the current triple and advance the queue. */
  async submit(aligned: boolean, reason?: string): Promise<SessionView> {
    if (!this.current) {
      return this.view();
    }
    const key = this.current.key;
    try {
      await this.api.submit(this.annotator, key, aligned, reason);
      this.lastError = null;
      this.undoStack.push(key);
      return await this.loadNext();
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
      return this.view();
    }
  }

  /** Re-open the most recently submitted triple so it can be re-decided. */
  async undo(): Promise<SessionView> {
    const key = this.undoStack.pop();
    if (key === undefined) {
      return this.view();
    }
    try {
      this.current = await this.api.triple(key);
      this.phase = "reviewing";
      this.lastError = null;
    } catch (error) {
      this.lastError = error instanceof Error ? error.message : String(error);
    }
    return this.view();
  }
}
