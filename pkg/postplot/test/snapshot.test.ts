import { describe, expect, it } from "vitest";
import path from "path";

import { readSnapshot } from "../src/snapshot.js";

const FIX = path.join(__dirname, "fixtures");

describe("snapshot reader", () => {
  it("reads the rest-state final snapshot", () => {
    const snap = readSnapshot(path.join(FIX, "rest", "snap_final.dat"));
    expect(snap.dims).toEqual([12, 12]);
    expect(snap.time).toBeCloseTo(0.1, 12);
    const rho = snap.fields["rho"];
    expect(rho.data.length).toBe(144);
    for (const v of rho.data) expect(v).toBe(1);
    const fe = snap.fields["Fe"];
    expect(fe.shape).toEqual([12, 12, 3, 3]);
    // identity distortion everywhere at rest
    expect(fe.data[0]).toBe(1);
    expect(fe.data[1]).toBe(0);
  });

  it("reads an evolving snapshot with nontrivial velocity", () => {
    const snap = readSnapshot(path.join(FIX, "creep", "snap_final.dat"));
    const v = snap.fields["v"];
    const maxAbs = Math.max(...Array.from(v.data, Math.abs));
    expect(maxAbs).toBeGreaterThan(0);
    expect(maxAbs).toBeLessThan(1);
  });
});
