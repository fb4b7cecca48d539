/**
 * Decision presentation: gauge value and badge text from a probe report.
 */

export interface ProbeReport {
  rho: number;
  decision: string;
}

export const BADGE_TEXT: Record<string, string> = {
  "reject-H0": "structure supported by data",
  "cannot-reject-H0": "could be an artifact",
  "inconclusive-not-converged": "inconclusive: solver did not converge",
};

export function badgeFor(report: ProbeReport): string {
  const text = BADGE_TEXT[report.decision];
  if (!text) throw new Error(`unknown decision ${report.decision}`);
  return text;
}

/** Gauge position in [0, 1]; rho may carry float slack past 1. */
export function gaugeValue(report: ProbeReport): number {
  if (Number.isNaN(report.rho)) return 0;
  return Math.max(0, Math.min(1, report.rho));
}

export function gaugePercentText(report: ProbeReport): string {
  return `${(gaugeValue(report) * 100).toFixed(1)}% of the structure's ` +
    "contrast is present in every credible image";
}
