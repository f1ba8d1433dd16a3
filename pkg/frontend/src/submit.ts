/**
 * Vote submission with an idempotency guard and stale-point recovery.
 *
 * One logical submission per (session, set): double-clicks are absorbed by
 * an in-flight latch, and a network retry that finds the server already
 * recorded the vote (duplicate_submission) counts as success. A
 * stale-point rejection surfaces as a refresh request instead of failing.
 */

import { ElectionApi, VoteResult } from "./api.js";
import { SliderPanel } from "./panel.js";

export type SubmitOutcome =
  | { kind: "accepted"; committed: boolean }
  | { kind: "refresh_needed"; currentVersion: number }
  | { kind: "rejected"; reason: string; overage?: number };

export class VoteSubmitter {
  private inFlight = new Set<string>();
  private done = new Set<string>();

  constructor(private api: ElectionApi, private instanceId: string,
              private sessionId: string, private retries = 2) {}

  key(setIndex: number): string {
    return `${this.sessionId}:${setIndex}`;
  }

  async submit(panel: SliderPanel, setIndex: number,
               justification?: string): Promise<SubmitOutcome> {
    const key = this.key(setIndex);
    if (this.inFlight.has(key) || this.done.has(key)) {
      return { kind: "rejected", reason: "already_submitted" };
    }
    this.inFlight.add(key);
    try {
      let lastError: unknown = null;
      for (let attempt = 0; attempt <= this.retries; attempt++) {
        let result: VoteResult;
        try {
          result = await this.api.vote(this.instanceId, {
            session_id: this.sessionId,
            set_index: setIndex,
            point: [...panel.values],
            point_version: panel.version,
            justification,
          });
        } catch (err) {
          lastError = err; // network failure: retry the same logical vote
          continue;
        }
        if (result.accepted) {
          this.done.add(key);
          return { kind: "accepted", committed: Boolean(result.committed) };
        }
        if (result.reason === "duplicate_submission" && attempt > 0) {
          // an earlier attempt landed before the connection dropped
          this.done.add(key);
          return { kind: "accepted", committed: false };
        }
        if (result.reason === "stale_point") {
          return {
            kind: "refresh_needed",
            currentVersion: Number(result.info?.current_version ?? -1),
          };
        }
        return {
          kind: "rejected",
          reason: result.reason ?? "unknown",
          overage: result.info?.overage as number | undefined,
        };
      }
      throw lastError instanceof Error ? lastError
        : new Error("vote submission failed");
    } finally {
      this.inFlight.delete(key);
    }
  }
}
