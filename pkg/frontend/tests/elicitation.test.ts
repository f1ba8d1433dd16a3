import { describe, expect, it } from "vitest";
import { ElicitationForm, NORMALIZED_WEIGHT_SUM } from "../src/elicitation.js";
import { DimView } from "../src/api.js";

const DIMS: DimView[] = [
  { label: "a", baseline: 100, kind: "expenditure", lo: 0, hi: 200, description: "" },
  { label: "b", baseline: 50, kind: "expenditure", lo: 0, hi: 100, description: "" },
  { label: "c", baseline: 80, kind: "income", lo: 0, hi: 160, description: "" },
];

describe("full elicitation form", () => {
  it("defaults: ideals at the baseline, weights at 5", () => {
    const f = new ElicitationForm(DIMS);
    expect(f.ideals).toEqual([100, 50, 80]);
    expect(f.weights).toEqual([5, 5, 5]);
    expect(f.deficitWeight).toBe(5);
    expect(f.allDefaultWeights()).toBe(true);
    expect(f.submittable()).toBe(true);
  });

  it("touching any weight clears the all-default flag", () => {
    const f = new ElicitationForm(DIMS);
    f.setWeight(1, 7);
    expect(f.allDefaultWeights()).toBe(false);
  });

  it("range endpoints are valid slider values", () => {
    const f = new ElicitationForm(DIMS);
    f.setIdeal(0, 0);
    f.setIdeal(1, 100);
    expect(f.ideals[0]).toBe(0);
    expect(f.ideals[1]).toBe(100);
    f.setIdeal(2, 999); // clamped to 2x baseline
    expect(f.ideals[2]).toBe(160);
  });

  it("weights clamp to [0, 10]", () => {
    const f = new ElicitationForm(DIMS);
    f.setWeight(0, 14);
    f.setDeficitWeight(-3);
    expect(f.weights[0]).toBe(10);
    expect(f.deficitWeight).toBe(0);
  });

  it("normalize preserves proportions at a fixed total", () => {
    const f = new ElicitationForm(DIMS);
    f.weights = [10, 5, 5];
    f.deficitWeight = 0;
    f.normalizeWeights();
    const total = f.weights.reduce((a, b) => a + b, 0) + f.deficitWeight;
    expect(total).toBeCloseTo(NORMALIZED_WEIGHT_SUM, 10);
    expect(f.weights[0] / f.weights[1]).toBeCloseTo(2, 10);
    expect(f.weights[1]).toBeCloseTo(f.weights[2], 10);
    expect(f.deficitWeight).toBe(0);
  });

  it("normalize with all-zero weights is a no-op", () => {
    const f = new ElicitationForm(DIMS);
    f.weights = [0, 0, 0];
    f.deficitWeight = 0;
    f.normalizeWeights();
    expect(f.weights).toEqual([0, 0, 0]);
  });

  it("blank-start mode requires every value slider to be touched", () => {
    const f = new ElicitationForm(DIMS, { blankStart: true });
    expect(f.submittable()).toBe(false);
    f.setIdeal(0, 120);
    f.setIdeal(1, 30);
    expect(f.submittable()).toBe(false);
    f.setIdeal(2, 60);
    expect(f.submittable()).toBe(true);
  });

  it("payload carries ideals, weights, and the deficit weight", () => {
    const f = new ElicitationForm(DIMS);
    f.setWeight(0, 8);
    const p = f.payload("sess-9");
    expect(p).toEqual({
      session_id: "sess-9", ideals: [100, 50, 80],
      weights: [8, 5, 5], deficit_weight: 5,
    });
  });
});
