/**
 * Session page flow with per-page timing capture.
 *
 * welcome -> instructions -> mechanism -> [elicitation] -> feedback -> done
 *
 * Instruction-reading time and mechanism-doing time are recorded as
 * separate measurements.
 */

export type Page = "welcome" | "instructions" | "mechanism" | "elicitation" |
  "feedback" | "done";

const ORDER: Page[] = ["welcome", "instructions", "mechanism", "elicitation",
  "feedback", "done"];

export interface PageTiming {
  page: Page;
  enteredAt: number;
  leftAt: number | null;
}

export class SessionFlow {
  readonly timings: PageTiming[] = [];
  private index = 0;

  constructor(private includeElicitation: boolean,
              private now: () => number = () => Date.now()) {
    this.timings.push({ page: "welcome", enteredAt: this.now(), leftAt: null });
  }

  get page(): Page {
    return ORDER[this.index];
  }

  advance(): Page {
    if (this.page === "done") return "done";
    this.timings[this.timings.length - 1].leftAt = this.now();
    this.index += 1;
    if (ORDER[this.index] === "elicitation" && !this.includeElicitation) {
      this.index += 1;
    }
    if (ORDER[this.index] !== "done") {
      this.timings.push({ page: ORDER[this.index], enteredAt: this.now(), leftAt: null });
    }
    return this.page;
  }

  /** Total milliseconds spent on a page (across visits). */
  timeOn(page: Page): number {
    let total = 0;
    for (const t of this.timings) {
      if (t.page === page && t.leftAt !== null) total += t.leftAt - t.enteredAt;
    }
    return total;
  }

  summary(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const p of ORDER) {
      if (p !== "done") out[p] = this.timeOn(p);
    }
    return out;
  }
}
