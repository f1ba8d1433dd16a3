/**
 * Full-elicitation state: ideal-value sliders over [lo, hi] (default: the
 * baseline, optionally blank-start to avoid anchoring) plus importance
 * weights in [0, 10] per dimension and for the deficit, defaulting to 5.
 */

import { DimView } from "./api.js";

export const WEIGHT_MIN = 0;
export const WEIGHT_MAX = 10;
export const WEIGHT_DEFAULT = 5;
export const NORMALIZED_WEIGHT_SUM = 10;

export class ElicitationForm {
  readonly dims: DimView[];
  ideals: number[];
  weights: number[];
  deficitWeight: number;
  /** true when the voter has not touched a value slider yet (blank-start mode) */
  readonly blankStart: boolean;
  private touched: boolean[];

  constructor(dims: DimView[], opts: { blankStart?: boolean } = {}) {
    this.dims = dims;
    this.blankStart = opts.blankStart ?? false;
    this.ideals = dims.map((d) => (this.blankStart ? d.lo : d.baseline));
    this.touched = dims.map(() => false);
    this.weights = dims.map(() => WEIGHT_DEFAULT);
    this.deficitWeight = WEIGHT_DEFAULT;
  }

  setIdeal(index: number, value: number): void {
    const d = this.dims[index];
    this.ideals[index] = Math.min(Math.max(value, d.lo), d.hi);
    this.touched[index] = true;
  }

  setWeight(index: number, value: number): void {
    this.weights[index] = clampWeight(value);
  }

  setDeficitWeight(value: number): void {
    this.deficitWeight = clampWeight(value);
  }

  allDefaultWeights(): boolean {
    return this.weights.every((w) => w === WEIGHT_DEFAULT) &&
      this.deficitWeight === WEIGHT_DEFAULT;
  }

  submittable(): boolean {
    // blank-start mode requires every value slider to have been set
    return !this.blankStart || this.touched.every(Boolean);
  }

  /** Rescale all weights (deficit included) to a fixed total, preserving
   * proportions; a counterweight to everything-is-important inflation. */
  normalizeWeights(): void {
    const total = this.weights.reduce((a, b) => a + b, 0) + this.deficitWeight;
    if (total <= 0) return;
    const scale = NORMALIZED_WEIGHT_SUM / total;
    this.weights = this.weights.map((w) => w * scale);
    this.deficitWeight = this.deficitWeight * scale;
  }

  payload(sessionId: string) {
    return {
      session_id: sessionId,
      ideals: [...this.ideals],
      weights: [...this.weights],
      deficit_weight: this.deficitWeight,
    };
  }
}

function clampWeight(value: number): number {
  return Math.min(Math.max(value, WEIGHT_MIN), WEIGHT_MAX);
}
