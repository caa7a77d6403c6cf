/**
 * Two drawing backends behind one interface: hand-built SVG text, and
 * a small software rasterizer emitting PNG (Bresenham lines plus a
 * 5x7 bitmap font, zlib-compressed by node's own zlib).
 */

import { deflateSync } from "zlib";

export interface Style {
  color?: string; // #rrggbb
  width?: number;
  dash?: boolean;
  opacity?: number;
}

export interface TextStyle {
  color?: string;
  size?: number; // nominal px height
  anchor?: "start" | "middle" | "end";
}

export interface Renderer {
  readonly width: number;
  readonly height: number;
  line(x1: number, y1: number, x2: number, y2: number, style?: Style): void;
  polyline(pts: Array<[number, number]>, style?: Style): void;
  rect(x: number, y: number, w: number, h: number, fill: string, opacity?: number): void;
  circle(x: number, y: number, r: number, fill: string): void;
  text(x: number, y: number, s: string, style?: TextStyle): void;
  toBuffer(): Buffer;
}

// ---------------------------------------------------------------------------
// SVG backend

export class SvgRenderer implements Renderer {
  private parts: string[] = [];

  constructor(
    public readonly width: number,
    public readonly height: number,
  ) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}">`,
      `<rect width="${width}" height="${height}" fill="#ffffff"/>`,
    );
  }

  private strokeAttrs(style?: Style): string {
    const color = style?.color ?? "#000000";
    const width = style?.width ?? 1;
    const dash = style?.dash ? ' stroke-dasharray="5,4"' : "";
    const op = style?.opacity !== undefined ? ` stroke-opacity="${style.opacity}"` : "";
    return `stroke="${color}" stroke-width="${width}" fill="none"${dash}${op}`;
  }

  line(x1: number, y1: number, x2: number, y2: number, style?: Style): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" ` +
        this.strokeAttrs(style) +
        "/>",
    );
  }

  polyline(pts: Array<[number, number]>, style?: Style): void {
    if (pts.length === 0) return;
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.parts.push(`<polyline points="${d}" ${this.strokeAttrs(style)}/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity?: number): void {
    const op = opacity !== undefined ? ` fill-opacity="${opacity}"` : "";
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"${op}/>`,
    );
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${r}" fill="${fill}"/>`);
  }

  text(x: number, y: number, s: string, style?: TextStyle): void {
    const size = style?.size ?? 12;
    const color = style?.color ?? "#000000";
    const anchor = style?.anchor ?? "start";
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-family="monospace" font-size="${size}" ` +
        `fill="${color}" text-anchor="${anchor}">${escapeXml(s)}</text>`,
    );
  }

  toBuffer(): Buffer {
    return Buffer.from(this.parts.join("\n") + "\n</svg>\n", "utf8");
  }
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

// ---------------------------------------------------------------------------
// PNG backend

// 5x7 font, one glyph per char, 7 rows of 5 bits (MSB left).
const FONT: Record<string, number[]> = {
  " ": [0, 0, 0, 0, 0, 0, 0],
  "0": [14, 17, 19, 21, 25, 17, 14],
  "1": [4, 12, 4, 4, 4, 4, 14],
  "2": [14, 17, 1, 2, 4, 8, 31],
  "3": [31, 2, 4, 2, 1, 17, 14],
  "4": [2, 6, 10, 18, 31, 2, 2],
  "5": [31, 16, 30, 1, 1, 17, 14],
  "6": [6, 8, 16, 30, 17, 17, 14],
  "7": [31, 1, 2, 4, 8, 8, 8],
  "8": [14, 17, 17, 14, 17, 17, 14],
  "9": [14, 17, 17, 15, 1, 2, 12],
  A: [14, 17, 17, 31, 17, 17, 17],
  B: [30, 17, 17, 30, 17, 17, 30],
  C: [14, 17, 16, 16, 16, 17, 14],
  D: [28, 18, 17, 17, 17, 18, 28],
  E: [31, 16, 16, 30, 16, 16, 31],
  F: [31, 16, 16, 30, 16, 16, 16],
  G: [14, 17, 16, 23, 17, 17, 15],
  H: [17, 17, 17, 31, 17, 17, 17],
  I: [14, 4, 4, 4, 4, 4, 14],
  J: [7, 2, 2, 2, 2, 18, 12],
  K: [17, 18, 20, 24, 20, 18, 17],
  L: [16, 16, 16, 16, 16, 16, 31],
  M: [17, 27, 21, 21, 17, 17, 17],
  N: [17, 25, 21, 19, 17, 17, 17],
  O: [14, 17, 17, 17, 17, 17, 14],
  P: [30, 17, 17, 30, 16, 16, 16],
  Q: [14, 17, 17, 17, 21, 18, 13],
  R: [30, 17, 17, 30, 20, 18, 17],
  S: [15, 16, 16, 14, 1, 1, 30],
  T: [31, 4, 4, 4, 4, 4, 4],
  U: [17, 17, 17, 17, 17, 17, 14],
  V: [17, 17, 17, 17, 17, 10, 4],
  W: [17, 17, 17, 21, 21, 27, 17],
  X: [17, 17, 10, 4, 10, 17, 17],
  Y: [17, 17, 10, 4, 4, 4, 4],
  Z: [31, 1, 2, 4, 8, 16, 31],
  ".": [0, 0, 0, 0, 0, 12, 12],
  ",": [0, 0, 0, 0, 12, 4, 8],
  ":": [0, 12, 12, 0, 12, 12, 0],
  ";": [0, 12, 12, 0, 12, 4, 8],
  "-": [0, 0, 0, 31, 0, 0, 0],
  "+": [0, 4, 4, 31, 4, 4, 0],
  "=": [0, 0, 31, 0, 31, 0, 0],
  "(": [2, 4, 8, 8, 8, 4, 2],
  ")": [8, 4, 2, 2, 2, 4, 8],
  "[": [14, 8, 8, 8, 8, 8, 14],
  "]": [14, 2, 2, 2, 2, 2, 14],
  "/": [1, 1, 2, 4, 8, 16, 16],
  "%": [25, 26, 2, 4, 8, 11, 19],
  "^": [4, 10, 17, 0, 0, 0, 0],
  "_": [0, 0, 0, 0, 0, 0, 31],
  "|": [4, 4, 4, 4, 4, 4, 4],
  "'": [4, 4, 0, 0, 0, 0, 0],
  "<": [2, 4, 8, 16, 8, 4, 2],
  ">": [8, 4, 2, 1, 2, 4, 8],
  "*": [0, 21, 14, 31, 14, 21, 0],
  "?": [14, 17, 1, 2, 4, 0, 4],
};

function parseColor(c: string): [number, number, number] {
  if (c.startsWith("#") && c.length === 7) {
    return [
      parseInt(c.slice(1, 3), 16),
      parseInt(c.slice(3, 5), 16),
      parseInt(c.slice(5, 7), 16),
    ];
  }
  return [0, 0, 0];
}

export class PngRenderer implements Renderer {
  private px: Uint8Array;

  constructor(
    public readonly width: number,
    public readonly height: number,
  ) {
    this.px = new Uint8Array(width * height * 3).fill(255);
  }

  private set(x: number, y: number, rgb: [number, number, number], alpha = 1): void {
    x = Math.round(x);
    y = Math.round(y);
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const i = (y * this.width + x) * 3;
    for (let c = 0; c < 3; c++) {
      this.px[i + c] = Math.round(alpha * rgb[c] + (1 - alpha) * this.px[i + c]);
    }
  }

  line(x1: number, y1: number, x2: number, y2: number, style?: Style): void {
    const rgb = parseColor(style?.color ?? "#000000");
    const w = style?.width ?? 1;
    const alpha = style?.opacity ?? 1;
    const steps = Math.max(1, Math.ceil(Math.hypot(x2 - x1, y2 - y1)));
    const dashOn = 6;
    const dashPeriod = 10;
    for (let s = 0; s <= steps; s++) {
      if (style?.dash && s % dashPeriod >= dashOn) continue;
      const x = x1 + ((x2 - x1) * s) / steps;
      const y = y1 + ((y2 - y1) * s) / steps;
      for (let dx = 0; dx < w; dx++) {
        for (let dy = 0; dy < w; dy++) {
          this.set(x + dx - (w - 1) / 2, y + dy - (w - 1) / 2, rgb, alpha);
        }
      }
    }
  }

  polyline(pts: Array<[number, number]>, style?: Style): void {
    for (let i = 1; i < pts.length; i++) {
      this.line(pts[i - 1][0], pts[i - 1][1], pts[i][0], pts[i][1], style);
    }
  }

  rect(x: number, y: number, w: number, h: number, fill: string, opacity = 1): void {
    const rgb = parseColor(fill);
    for (let yy = Math.round(y); yy < Math.round(y + h); yy++) {
      for (let xx = Math.round(x); xx < Math.round(x + w); xx++) {
        this.set(xx, yy, rgb, opacity);
      }
    }
  }

  circle(x: number, y: number, r: number, fill: string): void {
    const rgb = parseColor(fill);
    for (let yy = -r; yy <= r; yy++) {
      for (let xx = -r; xx <= r; xx++) {
        if (xx * xx + yy * yy <= r * r) this.set(x + xx, y + yy, rgb);
      }
    }
  }

  text(x: number, y: number, s: string, style?: TextStyle): void {
    const rgb = parseColor(style?.color ?? "#000000");
    const scale = Math.max(1, Math.round((style?.size ?? 12) / 8));
    const upper = s.toUpperCase();
    const adv = 6 * scale;
    let x0 = Math.round(x);
    if (style?.anchor === "middle") x0 -= Math.round((upper.length * adv) / 2);
    if (style?.anchor === "end") x0 -= upper.length * adv;
    const y0 = Math.round(y) - 7 * scale; // y is the text baseline
    for (const ch of upper) {
      const glyph = FONT[ch] ?? FONT["?"];
      for (let row = 0; row < 7; row++) {
        for (let col = 0; col < 5; col++) {
          if ((glyph[row] >> (4 - col)) & 1) {
            this.rect(x0 + col * scale, y0 + row * scale, scale, scale,
              rgbHex(rgb));
          }
        }
      }
      x0 += adv;
    }
  }

  toBuffer(): Buffer {
    // PNG: 8-bit RGB, no filter per scanline
    const raw = Buffer.alloc((this.width * 3 + 1) * this.height);
    for (let y = 0; y < this.height; y++) {
      const row = y * (this.width * 3 + 1);
      raw[row] = 0;
      Buffer.from(
        this.px.buffer,
        this.px.byteOffset + y * this.width * 3,
        this.width * 3,
      ).copy(raw, row + 1);
    }
    const chunks = [
      Buffer.from("\x89PNG\r\n\x1a\n", "binary"),
      pngChunk("IHDR", ihdr(this.width, this.height)),
      pngChunk("IDAT", deflateSync(raw)),
      pngChunk("IEND", Buffer.alloc(0)),
    ];
    return Buffer.concat(chunks);
  }
}

function rgbHex(rgb: [number, number, number]): string {
  return "#" + rgb.map((v) => v.toString(16).padStart(2, "0")).join("");
}

function ihdr(w: number, h: number): Buffer {
  const b = Buffer.alloc(13);
  b.writeUInt32BE(w, 0);
  b.writeUInt32BE(h, 4);
  b[8] = 8; // bit depth
  b[9] = 2; // color type RGB
  return b;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Buffer): number {
  let c = 0xffffffff;
  for (const b of buf) c = CRC_TABLE[(c ^ b) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function pngChunk(type: string, data: Buffer): Buffer {
  const out = Buffer.alloc(12 + data.length);
  out.writeUInt32BE(data.length, 0);
  out.write(type, 4, "ascii");
  data.copy(out, 8);
  out.writeUInt32BE(crc32(out.subarray(4, 8 + data.length)), 8 + data.length);
  return out;
}

export function makeRenderer(fmt: "png" | "svg", w: number, h: number): Renderer {
  return fmt === "png" ? new PngRenderer(w, h) : new SvgRenderer(w, h);
}
