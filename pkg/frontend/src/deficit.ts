/** Budget deficit: total expenditure minus total income.
 * Mirrors the server's computation so the readout never disagrees. */

export type DimKind = "expenditure" | "income";

export function deficit(values: number[], kinds: DimKind[]): number {
  if (values.length !== kinds.length) throw new Error("values/kinds mismatch");
  let total = 0;
  for (let i = 0; i < values.length; i++) {
    total += kinds[i] === "expenditure" ? values[i] : -values[i];
  }
  return total;
}
