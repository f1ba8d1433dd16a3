import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { creditUsage, NormOrder, parseOrder, SERVER_SLACK, withinBudget } from "../src/credit.js";

const goldenPath = fileURLToPath(
  new URL("../../golden/credit_norms.json", import.meta.url));
const golden: { delta: number[]; q: number | "inf"; expected: number }[] =
  JSON.parse(readFileSync(goldenPath, "utf-8"));

/** Independent reference: plain sum-of-powers, no overflow guard. */
function naiveNorm(delta: number[], q: NormOrder): number {
  if (q === "inf") return Math.max(...delta.map(Math.abs), 0);
  const s = delta.reduce((acc, d) => acc + Math.abs(d) ** (q as number), 0);
  return s ** (1 / (q as number));
}

describe("credit usage", () => {
  it("matches every golden vector", () => {
    expect(golden.length).toBeGreaterThanOrEqual(50);
    for (const c of golden) {
      expect(Math.abs(creditUsage(c.delta, c.q) - c.expected)).toBeLessThan(1e-9);
    }
  });

  it("agrees with the server acceptance rule on golden probe radii", () => {
    for (const c of golden) {
      for (const radius of [c.expected * 0.99 + 1e-9, c.expected * 1.01 + 1e-9]) {
        const clientAccepts = withinBudget(creditUsage(c.delta, c.q), radius);
        const serverAccepts = c.expected <= radius * (1 + SERVER_SLACK);
        expect(clientAccepts).toBe(serverAccepts);
      }
    }
  });

  it("panel example: Linf single slider at the limit", () => {
    expect(creditUsage([10, 0, 0, 0], "inf")).toBe(10);
    expect(withinBudget(10, 10)).toBe(true);
  });

  it("panel example: L1 over budget disables submit", () => {
    const usage = creditUsage([6, -5, 0, 0], 1);
    expect(usage).toBe(11);
    expect(withinBudget(usage, 10)).toBe(false);
  });

  it("panel example: L2 exactly on budget", () => {
    const usage = creditUsage([3, 4, 0, 0], 2);
    expect(usage).toBe(5);
    expect(withinBudget(usage, 5)).toBe(true);
  });

  it("fuzz: matches an independent implementation and decision rule", () => {
    let seed = 20170502;
    const rand = () => {
      // xorshift-ish deterministic generator
      seed ^= seed << 13; seed ^= seed >>> 17; seed ^= seed << 5;
      return ((seed >>> 0) % 1_000_000) / 1_000_000;
    };
    const orders: NormOrder[] = [1, 2, "inf", 1.5, 3];
    for (let i = 0; i < 500; i++) {
      const dim = 2 + Math.floor(rand() * 5);
      const q = orders[Math.floor(rand() * orders.length)];
      const delta = Array.from({ length: dim }, () => (rand() - 0.5) * 40);
      const usage = creditUsage(delta, q);
      expect(Math.abs(usage - naiveNorm(delta, q))).toBeLessThan(1e-9);
      const radius = usage * (0.5 + rand());
      expect(withinBudget(usage, radius)).toBe(usage <= radius * (1 + SERVER_SLACK));
    }
  });

  it("parses norm orders like the server", () => {
    expect(parseOrder("inf")).toBe("inf");
    expect(parseOrder("2")).toBe(2);
    expect(parseOrder(1.5)).toBe(1.5);
    expect(() => parseOrder(0.5)).toThrow();
  });
});
