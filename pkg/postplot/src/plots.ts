/**
 * The figures themselves: energy balance, stability monitors,
 * convergence orders, and final-snapshot heatmaps.
 */

import { PALETTE, Series, drawHeatmap, drawPanel } from "./figure.js";
import { ConvergenceRow, fitOrder, groupByField } from "./convergence.js";
import { LedgerFrame, cumulative } from "./ledger.js";
import { Renderer, makeRenderer } from "./render.js";
import { Snapshot } from "./snapshot.js";

export type Fmt = "png" | "svg";

const W = 760;

export function energyFigure(frame: LedgerFrame, fmt: Fmt): Renderer {
  const r = makeRenderer(fmt, W, 720);
  const t = frame.data.t;
  drawPanel(r, { x: 0, y: 0, w: W, h: 240 }, {
    title: "energy",
    xlabel: "t",
    series: [
      { x: t, y: frame.data.kinetic, label: "kinetic", color: PALETTE[0] },
      { x: t, y: frame.data.stored, label: "stored", color: PALETTE[1] },
      { x: t, y: frame.data.total, label: "total", color: PALETTE[2], dash: true },
    ],
  });
  const dissCols = [
    "diss_stokes", "diss_hyper", "diss_plastic", "diss_damage",
    "diss_diffusion",
  ] as const;
  const dissSeries: Series[] = dissCols.map((col, i) => ({
    x: t,
    y: cumulative(frame, col),
    label: col.replace("diss_", ""),
    color: PALETTE[i],
  }));
  drawPanel(r, { x: 0, y: 240, w: W, h: 240 }, {
    title: "cumulative dissipation",
    xlabel: "t",
    series: dissSeries,
  });
  drawPanel(r, { x: 0, y: 480, w: W, h: 240 }, {
    title: "balance residual per step (signed)",
    xlabel: "t",
    series: [
      { x: t, y: frame.data.residual, label: "residual", color: PALETTE[3] },
      { x: t, y: frame.data.cum_residual, label: "cum |residual|",
        color: PALETTE[4], dash: true },
    ],
  });
  return r;
}

export function monitorsFigure(frame: LedgerFrame, fmt: Fmt): Renderer {
  const r = makeRenderer(fmt, W, 480);
  const t = frame.data.t;
  drawPanel(r, { x: 0, y: 0, w: W, h: 240 }, {
    title: "positivity monitors",
    xlabel: "t",
    series: [
      { x: t, y: frame.data.min_rho, label: "min rho", color: PALETTE[0] },
      { x: t, y: frame.data.min_detFe, label: "min det Fe", color: PALETTE[1] },
    ],
  });
  drawPanel(r, { x: 0, y: 240, w: W, h: 240 }, {
    title: "cutoff monitors",
    xlabel: "t",
    series: [
      { x: t, y: frame.data.max_absFe, label: "max |Fe|", color: PALETTE[2] },
      { x: t, y: frame.data.trunc_active_frac, label: "active frac",
        color: PALETTE[3], dash: true },
    ],
  });
  return r;
}

export interface OrderFit {
  field: string;
  cliOrder: number;
  fitOrder: number;
}

/** Independent per-field log-log fits, for the annotation and the tests. */
export function convergenceFits(rows: ConvergenceRow[]): OrderFit[] {
  const out: OrderFit[] = [];
  for (const [field, list] of groupByField(rows)) {
    out.push({ field, cliOrder: list[0].order, fitOrder: fitOrder(list) });
  }
  return out;
}

export function convergenceFigure(rows: ConvergenceRow[], fmt: Fmt): Renderer {
  const r = makeRenderer(fmt, W, 420);
  const series: Series[] = [];
  const notes: string[] = [];
  let i = 0;
  for (const [field, list] of groupByField(rows)) {
    const pts = list.filter((row) => row.diff > 0);
    if (pts.length < 2) continue; // "exact" fields have nothing to fit
    const slope = fitOrder(list);
    series.push({
      x: pts.map((p) => p.tau),
      y: pts.map((p) => p.diff),
      label: field,
      color: PALETTE[i % PALETTE.length],
      markers: true,
    });
    notes.push(
      `${field}: fit ${slope.toFixed(3)} (solver ${list[0].order.toFixed(3)})`,
    );
    i += 1;
  }
  drawPanel(r, { x: 0, y: 0, w: W, h: 420 }, {
    title: "tau-refinement (log-log)",
    xlabel: "log10 tau",
    series,
    logx: true,
    logy: true,
    annotations: notes,
  });
  return r;
}

export function heatmapFigure(snap: Snapshot, field: string, fmt: Fmt): Renderer {
  const r = makeRenderer(fmt, 520, 480);
  const f = snap.fields[field];
  drawHeatmap(r, { x: 0, y: 0, w: 520, h: 480 }, f.data, snap.dims,
    `${field} at t=${snap.time.toPrecision(4)}`);
  return r;
}
