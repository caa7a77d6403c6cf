#!/usr/bin/env node
/**
 * postplot <run-dir> [--fmt png|svg]
 *
 * Reads ledger.csv (required), convergence.csv and snap_final.dat
 * (optional) from a solver run directory and writes figures into
 * <run-dir>/plots/. Inputs are never mutated; outputs are
 * deterministic functions of the inputs.
 */

import { existsSync, mkdirSync, writeFileSync } from "fs";
import path from "path";

import { convergenceFigure, convergenceFits, energyFigure, Fmt,
  heatmapFigure, monitorsFigure } from "./plots.js";
import { readConvergence } from "./convergence.js";
import { SchemaError, readLedger } from "./ledger.js";
import { readSnapshot } from "./snapshot.js";

export function run(argv: string[]): number {
  let fmt: Fmt = "svg";
  const positional: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--fmt") {
      const v = argv[++i];
      if (v !== "png" && v !== "svg") {
        console.error(`postplot: --fmt must be png or svg, got ${v}`);
        return 1;
      }
      fmt = v;
    } else if (argv[i].startsWith("-")) {
      console.error(`postplot: unknown flag ${argv[i]}`);
      return 1;
    } else {
      positional.push(argv[i]);
    }
  }
  if (positional.length !== 1) {
    console.error("usage: postplot <run-dir> [--fmt png|svg]");
    return 1;
  }
  const runDir = positional[0];
  const ledgerPath = path.join(runDir, "ledger.csv");
  const convPath = path.join(runDir, "convergence.csv");
  const snapPath = path.join(runDir, "snap_final.dat");
  if (!existsSync(ledgerPath) && !existsSync(convPath)) {
    console.error(`postplot: no ledger.csv or convergence.csv in ${runDir}`);
    return 1;
  }
  const outDir = path.join(runDir, "plots");
  const written: string[] = [];
  const emit = (name: string, buf: Buffer) => {
    mkdirSync(outDir, { recursive: true });
    const p = path.join(outDir, `${name}.${fmt}`);
    writeFileSync(p, buf);
    written.push(p);
  };

  try {
    if (existsSync(ledgerPath)) {
      const frame = readLedger(ledgerPath);
      emit("energy", energyFigure(frame, fmt).toBuffer());
      emit("monitors", monitorsFigure(frame, fmt).toBuffer());
    }
    if (existsSync(convPath)) {
      const rows = readConvergence(convPath);
      emit("convergence", convergenceFigure(rows, fmt).toBuffer());
      for (const f of convergenceFits(rows)) {
        if (Number.isFinite(f.fitOrder)) {
          console.log(
            `order ${f.field}: fit ${f.fitOrder.toFixed(3)} ` +
              `(solver ${f.cliOrder.toFixed(3)})`,
          );
        }
      }
    }
    if (existsSync(snapPath)) {
      const snap = readSnapshot(snapPath);
      for (const field of ["rho", "alpha", "mu"]) {
        if (snap.fields[field] && snap.dims.length === 2) {
          emit(`heatmap_${field}`, heatmapFigure(snap, field, fmt).toBuffer());
        }
      }
    }
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`postplot: ${err.message}`);
      return 1;
    }
    throw err;
  }
  for (const p of written) console.log(`wrote ${p}`);
  return 0;
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url.endsWith(path.basename(process.argv[1]));
if (isMain) {
  process.exit(run(process.argv.slice(2)));
}
