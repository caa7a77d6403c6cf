/**
 * Minimal figure layer: line panels with axes/ticks/legend, log-log
 * panels, and cell heatmaps, all drawn through the Renderer interface.
 */

import { Renderer } from "./render.js";

export interface Series {
  x: ArrayLike<number>;
  y: ArrayLike<number>;
  label: string;
  color: string;
  dash?: boolean;
  markers?: boolean;
}

export interface PanelSpec {
  title?: string;
  xlabel?: string;
  ylabel?: string;
  logx?: boolean;
  logy?: boolean;
  series: Series[];
  annotations?: string[];
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export const PALETTE = [
  "#1f6fb4", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e",
  "#a6761d", "#666666",
];

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.5 : 1;
    lo -= pad;
    hi += pad;
  }
  const span = hi - lo;
  const step0 = span / n;
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const candidates = [1, 2, 2.5, 5, 10].map((m) => m * mag);
  const step = candidates.find((s) => span / s <= n + 1) ?? candidates[4];
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) ticks.push(v);
  return ticks;
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(parseFloat(v.toPrecision(4)));
}

export function drawPanel(r: Renderer, rect: Rect, spec: PanelSpec): void {
  const mL = 62;
  const mR = 12;
  const mT = spec.title ? 26 : 12;
  const mB = 36;
  const px = rect.x + mL;
  const py = rect.y + mT;
  const pw = rect.w - mL - mR;
  const ph = rect.h - mT - mB;

  const tx = (v: number) => (spec.logx ? Math.log10(v) : v);
  const ty = (v: number) => (spec.logy ? Math.log10(v) : v);

  let xlo = Infinity;
  let xhi = -Infinity;
  let ylo = Infinity;
  let yhi = -Infinity;
  for (const s of spec.series) {
    for (let i = 0; i < s.x.length; i++) {
      const xv = tx(s.x[i]);
      const yv = ty(s.y[i]);
      if (!Number.isFinite(xv) || !Number.isFinite(yv)) continue;
      xlo = Math.min(xlo, xv);
      xhi = Math.max(xhi, xv);
      ylo = Math.min(ylo, yv);
      yhi = Math.max(yhi, yv);
    }
  }
  if (!Number.isFinite(xlo)) {
    xlo = 0; xhi = 1; ylo = 0; yhi = 1;
  }
  if (xhi === xlo) { xhi = xlo + 1; xlo -= 1; }
  if (yhi === ylo) {
    const pad = Math.abs(ylo) > 0 ? Math.abs(ylo) * 0.1 : 1;
    yhi += pad;
    ylo -= pad;
  } else {
    const pad = (yhi - ylo) * 0.06;
    yhi += pad;
    ylo -= pad;
  }

  const X = (v: number) => px + ((tx(v) - xlo) / (xhi - xlo)) * pw;
  const Y = (v: number) => py + ph - ((ty(v) - ylo) / (yhi - ylo)) * ph;

  // frame and ticks
  const axisStyle = { color: "#333333", width: 1 };
  const gridStyle = { color: "#cccccc", width: 1 };
  for (const t of niceTicks(xlo, xhi)) {
    const xp = px + ((t - xlo) / (xhi - xlo)) * pw;
    r.line(xp, py, xp, py + ph, gridStyle);
    const label = spec.logx ? `1e${fmtTick(t)}` : fmtTick(t);
    r.text(xp, py + ph + 16, label, { size: 10, anchor: "middle", color: "#333333" });
  }
  for (const t of niceTicks(ylo, yhi)) {
    const yp = py + ph - ((t - ylo) / (yhi - ylo)) * ph;
    r.line(px, yp, px + pw, yp, gridStyle);
    const label = spec.logy ? `1e${fmtTick(t)}` : fmtTick(t);
    r.text(px - 6, yp + 4, label, { size: 10, anchor: "end", color: "#333333" });
  }
  r.line(px, py, px, py + ph, axisStyle);
  r.line(px, py + ph, px + pw, py + ph, axisStyle);

  if (spec.title) {
    r.text(rect.x + rect.w / 2, rect.y + 16, spec.title, { size: 13, anchor: "middle" });
  }
  if (spec.xlabel) {
    r.text(px + pw / 2, rect.y + rect.h - 6, spec.xlabel,
      { size: 11, anchor: "middle", color: "#333333" });
  }
  if (spec.ylabel) {
    r.text(rect.x + 14, py - 4, spec.ylabel, { size: 11, color: "#333333" });
  }

  // series
  for (const s of spec.series) {
    const pts: Array<[number, number]> = [];
    for (let i = 0; i < s.x.length; i++) {
      const xp = X(s.x[i]);
      const yp = Y(s.y[i]);
      if (Number.isFinite(xp) && Number.isFinite(yp)) pts.push([xp, yp]);
    }
    r.polyline(pts, { color: s.color, width: 1.5, dash: s.dash });
    if (s.markers) for (const [xp, yp] of pts) r.circle(xp, yp, 3, s.color);
  }

  // legend
  let ly = py + 8;
  for (const s of spec.series) {
    r.line(px + pw - 120, ly, px + pw - 96, ly, { color: s.color, width: 2, dash: s.dash });
    r.text(px + pw - 90, ly + 4, s.label, { size: 10, color: "#222222" });
    ly += 15;
  }
  for (const note of spec.annotations ?? []) {
    r.text(px + 8, ly + 4, note, { size: 10, color: "#444444" });
    ly += 15;
  }
}

// ---------------------------------------------------------------------------
// heatmap

/** Blue-white-red diverging map on [0, 1]. */
function colormap(u: number): string {
  u = Math.min(1, Math.max(0, u));
  const stops: Array<[number, number, number]> = [
    [33, 102, 172], [247, 247, 247], [178, 24, 43],
  ];
  const t = u * 2;
  const i = t < 1 ? 0 : 1;
  const f = t - i;
  const c = stops[i].map((a, k) => Math.round(a + f * (stops[i + 1][k] - a)));
  return "#" + c.map((v) => v.toString(16).padStart(2, "0")).join("");
}

export function drawHeatmap(
  r: Renderer,
  rect: Rect,
  values: ArrayLike<number>,
  dims: number[],
  title: string,
): void {
  const [nx, ny] = dims;
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < values.length; i++) {
    lo = Math.min(lo, values[i]);
    hi = Math.max(hi, values[i]);
  }
  const span = hi > lo ? hi - lo : 1;
  const mT = 28;
  const mB = 20;
  const side = Math.min((rect.w - 70) / nx, (rect.h - mT - mB) / ny);
  const ox = rect.x + 10;
  const oy = rect.y + mT;
  for (let i = 0; i < nx; i++) {
    for (let j = 0; j < ny; j++) {
      const v = values[i * ny + j]; // row-major grid axes
      // x index is the first grid axis; draw with y up
      r.rect(ox + i * side, oy + (ny - 1 - j) * side, side + 0.5, side + 0.5,
        colormap((v - lo) / span));
    }
  }
  r.text(rect.x + rect.w / 2, rect.y + 16, title, { size: 13, anchor: "middle" });
  // colorbar
  const cbx = ox + nx * side + 16;
  const cbh = ny * side;
  const steps = 40;
  for (let s = 0; s < steps; s++) {
    r.rect(cbx, oy + cbh - ((s + 1) * cbh) / steps, 14, cbh / steps + 0.5,
      colormap(s / (steps - 1)));
  }
  r.text(cbx + 18, oy + 8, fmtTick(hi), { size: 9 });
  r.text(cbx + 18, oy + cbh, fmtTick(lo), { size: 9 });
}
