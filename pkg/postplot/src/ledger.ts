/**
 * Ledger CSV reader. The column list is a frozen contract shared with
 * the solver; any mismatch is a schema error, not something to guess
 * around.
 */

import { readFileSync } from "fs";

export const LEDGER_COLUMNS = [
  "step", "t", "tau",
  "kinetic", "stored", "total",
  "diss_stokes", "diss_hyper", "diss_plastic", "diss_damage",
  "diss_diffusion", "power_gravity",
  "residual", "cum_residual",
  "min_rho", "min_detFe", "max_absFe", "max_inv_detFe",
  "trunc_active_frac", "newton_iters", "transport_iters",
] as const;

export type LedgerColumn = (typeof LEDGER_COLUMNS)[number];

export class SchemaError extends Error {}

export interface LedgerFrame {
  n: number;
  columns: readonly string[];
  data: Record<LedgerColumn, Float64Array>;
}

export function parseLedger(text: string, source = "<ledger>"): LedgerFrame {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) throw new SchemaError(`${source}: empty ledger`);
  const header = lines[0].split(",");
  if (
    header.length !== LEDGER_COLUMNS.length ||
    header.some((h, i) => h !== LEDGER_COLUMNS[i])
  ) {
    throw new SchemaError(
      `${source}: ledger header does not match the frozen column contract`,
    );
  }
  const n = lines.length - 1;
  const data = {} as Record<LedgerColumn, Float64Array>;
  for (const col of LEDGER_COLUMNS) data[col] = new Float64Array(n);
  for (let r = 0; r < n; r++) {
    const parts = lines[r + 1].split(",");
    if (parts.length !== LEDGER_COLUMNS.length) {
      throw new SchemaError(`${source}: row ${r + 1} has ${parts.length} fields`);
    }
    for (let c = 0; c < LEDGER_COLUMNS.length; c++) {
      const v = Number(parts[c]);
      if (!Number.isFinite(v)) {
        throw new SchemaError(`${source}: non-numeric value in row ${r + 1}`);
      }
      data[LEDGER_COLUMNS[c]][r] = v;
    }
  }
  for (let r = 1; r < n; r++) {
    if (!(data.t[r] > data.t[r - 1])) {
      throw new SchemaError(`${source}: time column is not strictly increasing`);
    }
  }
  return { n, columns: LEDGER_COLUMNS, data };
}

export function readLedger(path: string): LedgerFrame {
  return parseLedger(readFileSync(path, "utf8"), path);
}

/** Cumulative integral tau * rate, one entry per ledger row. */
export function cumulative(frame: LedgerFrame, col: LedgerColumn): Float64Array {
  const out = new Float64Array(frame.n);
  let acc = 0;
  for (let r = 0; r < frame.n; r++) {
    acc += frame.data.tau[r] * frame.data[col][r];
    out[r] = acc;
  }
  return out;
}
