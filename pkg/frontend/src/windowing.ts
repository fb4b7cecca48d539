/**
 * Grayscale window/level mapping shared by the three image panes.
 *
 * The service ships images as float64 arrays; the panes render them
 * through one (window, level) pair so intensities are comparable across
 * the reconstruction, the credible image, and the difference map.
 */

export interface WindowLevel {
  /** full intensity span mapped to black..white */
  window: number;
  /** intensity at mid-gray */
  level: number;
}

export function defaultWindowLevel(values: Float64Array): WindowLevel {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) return { window: 1, level: lo || 0 };
  return { window: hi - lo, level: (hi + lo) / 2 };
}

/** Map one intensity to 0..255 under the window; clamps at the ends. */
export function toGray(value: number, wl: WindowLevel): number {
  const w = Math.max(wl.window, 1e-12);
  const t = (value - (wl.level - w / 2)) / w;
  return Math.round(255 * Math.max(0, Math.min(1, t)));
}

export function toPixels(
  values: Float64Array, wl: WindowLevel,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    const g = toGray(values[i], wl);
    out[4 * i] = g;
    out[4 * i + 1] = g;
    out[4 * i + 2] = g;
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Decode the rawj payload (base64 of little-endian float64). */
export function decodeValues(b64: string): Float64Array {
  // atob is global in browsers and node 16+, the two places this runs
  const raw = Uint8Array.from(atob(b64), (c) => c.charCodeAt(0));
  return new Float64Array(raw.buffer, 0, raw.byteLength / 8);
}
