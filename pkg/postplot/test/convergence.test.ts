import { describe, expect, it } from "vitest";
import path from "path";

import { fitOrder, groupByField, linearFit, readConvergence }
  from "../src/convergence.js";
import { convergenceFits } from "../src/plots.js";

const FIX = path.join(__dirname, "fixtures");

describe("convergence orders", () => {
  it("linear fit recovers an exact line", () => {
    const { slope, intercept } = linearFit([0, 1, 2, 3], [1, 3, 5, 7]);
    expect(slope).toBeCloseTo(2, 12);
    expect(intercept).toBeCloseTo(1, 12);
  });

  it("independent log-log fit matches the solver's printed order to 0.05", () => {
    const rows = readConvergence(path.join(FIX, "conv", "convergence.csv"));
    const fits = convergenceFits(rows).filter((f) => Number.isFinite(f.fitOrder));
    expect(fits.length).toBeGreaterThan(0);
    for (const f of fits) {
      expect(Math.abs(f.fitOrder - f.cliOrder)).toBeLessThanOrEqual(0.05);
    }
  });

  it("exact fields (zero diffs) yield no fit instead of garbage", () => {
    const rows = readConvergence(path.join(FIX, "conv", "convergence.csv"));
    const byField = groupByField(rows);
    const alpha = byField.get("alpha");
    expect(alpha).toBeDefined();
    expect(Number.isNaN(fitOrder(alpha!))).toBe(true);
  });
});
