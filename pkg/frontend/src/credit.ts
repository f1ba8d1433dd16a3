/**
 * Movement-credit accounting: the Lq norm of the voter's tentative slider
 * displacement. Must agree with the server's validator bit-for-bit on the
 * shared golden vectors, including the acceptance slack.
 */

export type NormOrder = number | "inf";

/** Server-side acceptance slack: usage <= radius * (1 + SERVER_SLACK). */
export const SERVER_SLACK = 1e-6;

export function creditUsage(delta: number[], q: NormOrder): number {
  if (q === "inf") {
    let worst = 0;
    for (const d of delta) worst = Math.max(worst, Math.abs(d));
    return worst;
  }
  if (q === 1) {
    let sum = 0;
    for (const d of delta) sum += Math.abs(d);
    return sum;
  }
  if (q === 2) {
    let sum = 0;
    for (const d of delta) sum += d * d;
    return Math.sqrt(sum);
  }
  if (!(q > 1)) throw new Error(`invalid norm order ${q}`);
  // factor out the largest component so large orders cannot overflow
  let worst = 0;
  for (const d of delta) worst = Math.max(worst, Math.abs(d));
  if (worst === 0) return 0;
  let sum = 0;
  for (const d of delta) sum += Math.pow(Math.abs(d) / worst, q);
  return worst * Math.pow(sum, 1 / q);
}

/** Whether the server would accept a move of this usage at this radius. */
export function withinBudget(usage: number, radius: number): boolean {
  return usage <= radius * (1 + SERVER_SLACK);
}

export function parseOrder(q: number | string | null): NormOrder {
  if (q === "inf" || q === "infinity") return "inf";
  const n = typeof q === "string" ? parseFloat(q) : q;
  if (n === null || n === undefined || Number.isNaN(n!) || (n as number) < 1) {
    throw new Error(`invalid norm order ${q}`);
  }
  return n as number;
}
