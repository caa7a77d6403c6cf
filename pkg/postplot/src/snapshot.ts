/**
 * Snapshot reader: text header (dims, spacing, field list, time), then
 * row-major float64 binary blocks, one per field.
 */

import { readFileSync } from "fs";

import { SchemaError } from "./ledger.js";

export const SNAPSHOT_MAGIC = "eulervisc-snapshot 1";

export interface Snapshot {
  dims: number[];
  spacing: number[];
  bc: string;
  time: number;
  fields: Record<string, { shape: number[]; data: Float64Array }>;
}

function fieldShape(name: string, dims: number[]): number[] {
  const d = dims.length;
  switch (name) {
    case "rho":
    case "alpha":
    case "mu":
      return dims.slice();
    case "v":
    case "xi":
      return [...dims, d];
    case "Fe":
      return [...dims, 3, 3];
    default:
      throw new SchemaError(`unknown snapshot field ${name}`);
  }
}

export function readSnapshot(path: string): Snapshot {
  const buf = readFileSync(path);
  // header is ASCII lines terminated by an "end-header" line
  let offset = 0;
  const lines: string[] = [];
  for (;;) {
    const nl = buf.indexOf(0x0a, offset);
    if (nl < 0) throw new SchemaError(`${path}: truncated header`);
    const line = buf.subarray(offset, nl).toString("ascii");
    offset = nl + 1;
    if (line === "end-header") break;
    lines.push(line);
  }
  if (lines[0] !== SNAPSHOT_MAGIC) {
    throw new SchemaError(`${path}: not a snapshot file`);
  }
  const meta: Record<string, string> = {};
  for (const line of lines.slice(1)) {
    const idx = line.indexOf(": ");
    if (idx > 0) meta[line.slice(0, idx)] = line.slice(idx + 2);
  }
  const dims = meta["dims"].split(/\s+/).map(Number);
  const spacing = meta["spacing"].split(/\s+/).map(Number);
  const time = Number(meta["time"]);
  const names = meta["fields"].split(/\s+/);
  const fields: Snapshot["fields"] = {};
  for (const name of names) {
    const shape = fieldShape(name, dims);
    const count = shape.reduce((a, b) => a * b, 1);
    const bytes = count * 8;
    if (offset + bytes > buf.length) {
      throw new SchemaError(`${path}: truncated data for field ${name}`);
    }
    const data = new Float64Array(count);
    for (let i = 0; i < count; i++) data[i] = buf.readDoubleLE(offset + 8 * i);
    offset += bytes;
    fields[name] = { shape, data };
  }
  return { dims, spacing, bc: meta["bc"] ?? "", time, fields };
}
