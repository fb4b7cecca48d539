import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { countOn, decodeRle, encodeRle, MaskGrid } from "../src/rle";

// Shared with the Python side: both implementations must replay these
// cases bit for bit, so the file is never regenerated casually.
const goldenPath = fileURLToPath(
  new URL("../../tests/fixtures/rle_golden.json", import.meta.url));

interface GoldenCase {
  name: string;
  height: number;
  width: number;
  bits: number[];
  runs: number[];
}

const golden = JSON.parse(readFileSync(goldenPath, "utf8")) as {
  cases: GoldenCase[];
};

function gridOf(c: GoldenCase): MaskGrid {
  return { height: c.height, width: c.width, bits: Uint8Array.from(c.bits) };
}

describe("golden run-length cases", () => {
  it("has the expected corpus", () => {
    expect(golden.cases.length).toBe(8);
  });

  for (const c of golden.cases) {
    it(`encodes ${c.name}`, () => {
      expect(encodeRle(gridOf(c))).toEqual(c.runs);
    });
    it(`decodes ${c.name}`, () => {
      const grid = decodeRle({ height: c.height, width: c.width,
                               rle: c.runs });
      expect(Array.from(grid.bits)).toEqual(c.bits);
    });
  }
});

describe("round trips", () => {
  it("recovers random masks exactly", () => {
    // deterministic LCG so failures reproduce
    let s = 12345;
    const next = () => (s = (s * 1103515245 + 12345) & 0x7fffffff) / 0x80000000;
    for (let trial = 0; trial < 50; trial++) {
      const height = 1 + Math.floor(next() * 12);
      const width = 1 + Math.floor(next() * 12);
      const bits = new Uint8Array(height * width);
      for (let i = 0; i < bits.length; i++) bits[i] = next() < 0.4 ? 1 : 0;
      const grid: MaskGrid = { height, width, bits };
      const back = decodeRle({ height, width, rle: encodeRle(grid) });
      expect(Array.from(back.bits)).toEqual(Array.from(bits));
      expect(countOn(back)).toBe(countOn(grid));
    }
  });
});

describe("malformed payloads", () => {
  it("rejects counts that do not cover the grid", () => {
    expect(() => decodeRle({ height: 2, width: 2, rle: [3] })).toThrow();
    expect(() => decodeRle({ height: 2, width: 2, rle: [5] })).toThrow();
  });
  it("rejects negative and misplaced zero runs", () => {
    expect(() => decodeRle({ height: 2, width: 2, rle: [2, -1, 3] }))
      .toThrow();
    expect(() => decodeRle({ height: 2, width: 2, rle: [1, 0, 3] }))
      .toThrow();
  });
  it("allows a leading zero for masks that start on", () => {
    const grid = decodeRle({ height: 1, width: 3, rle: [0, 2, 1] });
    expect(Array.from(grid.bits)).toEqual([1, 1, 0]);
  });
});
