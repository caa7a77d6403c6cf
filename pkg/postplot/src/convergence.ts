/**
 * Convergence CSV reader and the independent log-log order fit.
 */

import { readFileSync } from "fs";

import { SchemaError } from "./ledger.js";

const CONV_COLUMNS = ["field", "level", "tau", "diff", "order"] as const;

export interface ConvergenceRow {
  field: string;
  level: number;
  tau: number;
  diff: number;
  order: number; // the solver CLI's printed order, NaN when undefined
}

export function parseConvergence(text: string, source = "<csv>"): ConvergenceRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  const header = lines[0]?.split(",") ?? [];
  if (
    header.length !== CONV_COLUMNS.length ||
    header.some((h, i) => h !== CONV_COLUMNS[i])
  ) {
    throw new SchemaError(`${source}: unexpected convergence CSV header`);
  }
  return lines.slice(1).map((line) => {
    const [field, level, tau, diff, order] = line.split(",");
    return {
      field,
      level: Number(level),
      tau: Number(tau),
      diff: Number(diff),
      order: Number(order),
    };
  });
}

export function readConvergence(path: string): ConvergenceRow[] {
  return parseConvergence(readFileSync(path, "utf8"), path);
}

/** Least-squares slope of y against x. */
export function linearFit(x: number[], y: number[]): { slope: number; intercept: number } {
  const n = x.length;
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx };
}

/**
 * Independent observed order: slope of log(diff) vs log(tau).
 * Returns NaN when the data cannot support a fit (fewer than two
 * points or non-positive diffs, e.g. an "exact" scenario).
 */
export function fitOrder(rows: ConvergenceRow[]): number {
  const pts = rows.filter((r) => r.diff > 0 && r.tau > 0);
  if (pts.length < 2) return NaN;
  return linearFit(
    pts.map((r) => Math.log(r.tau)),
    pts.map((r) => Math.log(r.diff)),
  ).slope;
}

export function groupByField(rows: ConvergenceRow[]): Map<string, ConvergenceRow[]> {
  const out = new Map<string, ConvergenceRow[]>();
  for (const row of rows) {
    const list = out.get(row.field) ?? [];
    list.push(row);
    out.set(row.field, list);
  }
  for (const list of out.values()) list.sort((a, b) => a.level - b.level);
  return out;
}
