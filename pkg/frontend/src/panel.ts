/**
 * Constrained slider panel state: tentative slider values against the
 * committed current point, with live credit usage, deficit, and
 * percent-from-baseline readouts.
 *
 * All authoritative state comes from the service; this class only holds
 * the voter's tentative movement for one set.
 */

import { creditUsage, NormOrder, withinBudget } from "./credit.js";
import { deficit, DimKind } from "./deficit.js";
import { DimView, SetView } from "./api.js";

export interface CreditMeter {
  used: number;
  remaining: number;
  usedPercent: number; // of the radius
  constraint: NormOrder;
}

export class SliderPanel {
  readonly dims: DimView[];
  readonly q: NormOrder;
  current: number[];
  radius: number;
  version: number;
  values: number[];
  readonly step: number[];

  constructor(dims: DimView[], q: NormOrder, set: SetView,
              stepsPerRange = 1000) {
    if (set.radius === null) throw new Error("constrained panel needs a radius");
    this.dims = dims;
    this.q = q;
    this.current = [...set.point];
    this.radius = set.radius;
    this.version = set.version;
    this.values = [...set.point]; // sliders default to the shown point
    this.step = dims.map((d) => (d.hi - d.lo) / stepsPerRange);
  }

  setSlider(index: number, value: number): void {
    const d = this.dims[index];
    this.values[index] = Math.min(Math.max(value, d.lo), d.hi);
  }

  delta(): number[] {
    return this.values.map((v, i) => v - this.current[i]);
  }

  usage(): number {
    return creditUsage(this.delta(), this.q);
  }

  meter(): CreditMeter {
    const used = this.usage();
    return {
      used,
      remaining: Math.max(this.radius - used, 0),
      usedPercent: this.radius > 0 ? (100 * used) / this.radius : 0,
      constraint: this.q,
    };
  }

  submitEnabled(): boolean {
    return withinBudget(this.usage(), this.radius);
  }

  percentFromBaseline(): number[] {
    return this.values.map((v, i) => {
      const b = this.dims[i].baseline;
      return b !== 0 ? (100 * (v - b)) / b : 0;
    });
  }

  deficit(): number {
    return deficit(this.values, this.dims.map((d) => d.kind as DimKind));
  }

  /**
   * Adopt a fresh committed point after a stale-point rejection, keeping
   * the tentative movement where still feasible: an infeasible leftover
   * displacement is scaled onto the new constraint boundary.
   */
  refresh(set: SetView): void {
    if (set.radius === null) throw new Error("constrained panel needs a radius");
    const tentative = [...this.values];
    this.current = [...set.point];
    this.radius = set.radius;
    this.version = set.version;
    const delta = tentative.map((v, i) => v - this.current[i]);
    const used = creditUsage(delta, this.q);
    if (withinBudget(used, this.radius)) {
      this.values = tentative;
      return;
    }
    const scale = used > 0 ? this.radius / used : 0;
    this.values = this.current.map((c, i) => {
      const d = this.dims[i];
      return Math.min(Math.max(c + delta[i] * scale, d.lo), d.hi);
    });
  }
}
