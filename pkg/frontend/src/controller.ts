// Session controller: feeds API results through the state machine and
// drains the optimistic outbox one submission at a time, in queue order.

import {
  bannerCleared,
  initialState,
  scoreChosen,
  sessionLoaded,
  sessionMissing,
  sessionRequested,
  sessionUnauthorized,
  sessionUnreachable,
  submitConfirmed,
  submitRejected,
  submitUnreachable,
} from "./state.js";
import type { AppState } from "./state.js";
import { ApiError } from "./types.js";
import type { ApiClient, Score } from "./types.js";

export class Controller {
  private state: AppState = initialState();
  private draining = false;

  constructor(
    private readonly api: ApiClient,
    private readonly onChange: (state: AppState) => void = () => {},
  ) {}

  getState(): AppState {
    return this.state;
  }

  private set(next: AppState): void {
    this.state = next;
    this.onChange(next);
  }

  async start(annotatorId: string): Promise<void> {
    this.set(sessionRequested(this.state, annotatorId));
    try {
      this.set(sessionLoaded(this.state, await this.api.loadSession(annotatorId)));
    } catch (error) {
      if (error instanceof ApiError && error.kind === "unauthorized") {
        this.set(sessionUnauthorized(this.state));
      } else if (error instanceof ApiError && error.kind === "missing") {
        this.set(sessionMissing(this.state, annotatorId));
      } else {
        this.set(sessionUnreachable(this.state));
      }
    }
  }

  rate(score: Score): Promise<void> {
    this.set(scoreChosen(this.state, score));
    return this.flush();
  }

  // connectivity returned (or the banner button): reload or re-send
  async retry(): Promise<void> {
    if (this.state.phase === "loading") {
      await this.start(this.state.annotatorId);
      return;
    }
    this.set(bannerCleared(this.state));
    await this.flush();
  }

  private async flush(): Promise<void> {
    if (this.draining) return;
    this.draining = true;
    try {
      while (this.state.outbox.length > 0) {
        const entry = this.state.outbox[0];
        if (entry === undefined) break;
        try {
          const ack = await this.api.submitRating(entry.taskId, entry.score);
          this.set(submitConfirmed(this.state, ack.task_id));
        } catch (error) {
          if (error instanceof ApiError && error.kind === "unauthorized") {
            this.set(sessionUnauthorized(this.state));
            return;
          }
          if (error instanceof ApiError && error.kind !== "network") {
            this.set(submitRejected(this.state, entry.taskId, error.message));
            continue;
          }
          this.set(submitUnreachable(this.state));
          return;
        }
      }
    } finally {
      this.draining = false;
    }
  }
}
