/**
 * Run-length codec for probe masks, the wire format the service expects.
 *
 * A mask is a boolean grid flattened row-major. The encoding is a list of
 * run lengths that alternate between OFF and ON pixels, always starting
 * with the leading OFF count (zero when the first pixel is on). Interior
 * runs are positive and the lengths add up to exactly height * width, so
 * decode(encode(m)) is the identity on every well-formed mask.
 */

export interface MaskGrid {
  height: number;
  width: number;
  /** row-major, length height * width */
  bits: Uint8Array;
}

export interface RleMask {
  height: number;
  width: number;
  rle: number[];
}

export function encodeRle(mask: MaskGrid): number[] {
  const n = mask.height * mask.width;
  if (mask.bits.length !== n) {
    throw new Error(`mask bits length ${mask.bits.length}, expected ${n}`);
  }
  const runs: number[] = [];
  let current = 0; // runs start counting OFF pixels
  let length = 0;
  for (let i = 0; i < n; i++) {
    const bit = mask.bits[i] ? 1 : 0;
    if (bit === current) {
      length += 1;
    } else {
      runs.push(length);
      current = bit;
      length = 1;
    }
  }
  runs.push(length);
  return runs;
}

export function decodeRle(doc: RleMask): MaskGrid {
  const { height, width, rle } = doc;
  if (!Number.isInteger(height) || height < 1 ||
      !Number.isInteger(width) || width < 1) {
    throw new Error(`bad mask dimensions ${height}x${width}`);
  }
  const n = height * width;
  const bits = new Uint8Array(n);
  let pos = 0;
  let value = 0;
  for (let i = 0; i < rle.length; i++) {
    const run = rle[i];
    if (!Number.isInteger(run) || run < 0 || (run === 0 && i > 0)) {
      throw new Error(`bad run ${run} at index ${i}`);
    }
    if (pos + run > n) {
      throw new Error(`runs overflow the ${height}x${width} grid`);
    }
    if (value === 1) {
      bits.fill(1, pos, pos + run);
    }
    pos += run;
    value = 1 - value;
  }
  if (pos !== n) {
    throw new Error(`runs cover ${pos} pixels of ${n}`);
  }
  return { height, width, bits };
}

export function countOn(mask: MaskGrid): number {
  let total = 0;
  for (let i = 0; i < mask.bits.length; i++) total += mask.bits[i];
  return total;
}
