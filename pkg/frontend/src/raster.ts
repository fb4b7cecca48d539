/**
 * Brush-stroke rasterizer and the undoable mask editor.
 *
 * A stroke is a polyline in image pixel coordinates with a brush radius;
 * it stamps every pixel whose center lies within the radius of any
 * segment (a single point stamps a disk). Erase strokes clear instead of
 * set. The editor snapshots the grid before each stroke so undo restores
 * the previous state bit-exactly.
 */

import { MaskGrid } from "./rle.js";

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  points: Point[];
  radius: number;
  erase?: boolean;
}

function distanceToSegmentSq(px: number, py: number,
                             a: Point, b: Point): number {
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const lenSq = dx * dx + dy * dy;
  let t = 0;
  if (lenSq > 0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / lenSq;
    t = Math.max(0, Math.min(1, t));
  }
  const cx = a.x + t * dx;
  const cy = a.y + t * dy;
  return (px - cx) * (px - cx) + (py - cy) * (py - cy);
}

export function stampStroke(grid: MaskGrid, stroke: Stroke): void {
  const { height, width, bits } = grid;
  const r = stroke.radius;
  if (!(r > 0)) throw new Error(`brush radius must be positive, got ${r}`);
  const rSq = r * r;
  const pts = stroke.points.length === 1
    ? [stroke.points[0], stroke.points[0]]
    : stroke.points;
  const value = stroke.erase ? 0 : 1;
  for (let s = 0; s + 1 < pts.length; s++) {
    const a = pts[s];
    const b = pts[s + 1];
    const lo = {
      x: Math.max(0, Math.floor(Math.min(a.x, b.x) - r)),
      y: Math.max(0, Math.floor(Math.min(a.y, b.y) - r)),
    };
    const hi = {
      x: Math.min(width - 1, Math.ceil(Math.max(a.x, b.x) + r)),
      y: Math.min(height - 1, Math.ceil(Math.max(a.y, b.y) + r)),
    };
    for (let row = lo.y; row <= hi.y; row++) {
      for (let col = lo.x; col <= hi.x; col++) {
        if (distanceToSegmentSq(col, row, a, b) <= rSq) {
          bits[row * width + col] = value;
        }
      }
    }
  }
}

export class MaskEditor {
  readonly height: number;
  readonly width: number;
  private bits: Uint8Array;
  private history: Uint8Array[] = [];

  constructor(height: number, width: number) {
    this.height = height;
    this.width = width;
    this.bits = new Uint8Array(height * width);
  }

  grid(): MaskGrid {
    return { height: this.height, width: this.width, bits: this.bits };
  }

  apply(stroke: Stroke): void {
    this.history.push(this.bits.slice());
    stampStroke(this.grid(), stroke);
  }

  /** Restore the grid exactly as it was before the last stroke. */
  undo(): boolean {
    const prev = this.history.pop();
    if (!prev) return false;
    this.bits = prev;
    return true;
  }

  clear(): void {
    this.history.push(this.bits.slice());
    this.bits = new Uint8Array(this.height * this.width);
  }

  isEmpty(): boolean {
    return !this.bits.some((b) => b !== 0);
  }
}
