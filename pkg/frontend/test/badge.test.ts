import { describe, expect, it } from "vitest";
import { badgeFor, gaugePercentText, gaugeValue } from "../src/badge";

function report(decision: string, rho: number) {
  return { decision, rho } as Parameters<typeof badgeFor>[0];
}

describe("verdict badges", () => {
  it("maps each decision to its plain-language label", () => {
    expect(badgeFor(report("reject-H0", 0.9)))
      .toBe("structure supported by data");
    expect(badgeFor(report("cannot-reject-H0", 0.0)))
      .toBe("could be an artifact");
    expect(badgeFor(report("inconclusive-not-converged", 0.5)))
      .toBe("inconclusive: solver did not converge");
  });

  it("refuses unknown decisions instead of guessing", () => {
    expect(() => badgeFor(report("maybe", 0.5))).toThrow();
  });
});

describe("confidence gauge", () => {
  it("passes through in-range values", () => {
    expect(gaugeValue(report("reject-H0", 0.97))).toBeCloseTo(0.97, 12);
    expect(gaugePercentText(report("reject-H0", 0.97)))
      .toMatch(/^97\.0% /);
  });

  it("clamps to the unit interval", () => {
    expect(gaugeValue(report("reject-H0", 1.4))).toBe(1);
    expect(gaugeValue(report("cannot-reject-H0", -0.2))).toBe(0);
    expect(gaugeValue(report("cannot-reject-H0", 0))).toBe(0);
    expect(gaugePercentText(report("cannot-reject-H0", 0)))
      .toMatch(/^0\.0% /);
  });

  it("treats NaN as no evidence", () => {
    expect(gaugeValue(report("inconclusive-not-converged", NaN))).toBe(0);
  });
});
