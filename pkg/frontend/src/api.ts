/**
 * Thin typed client for the probe service. All communication goes through
 * these five endpoints plus the session image route; the frontend never
 * touches files.
 */

import { RleMask } from "./rle.js";

export interface SessionDoc {
  id: string;
  status: "queued" | "reconstructing" | "ready" | "failed";
  epsilon?: number;
  geometry?: { side: number; angles: number; detectors: number };
  map?: { residual: number; objective: number; converged: boolean };
  probes?: string[];
  error?: string;
}

export interface ProbeDoc {
  id: string;
  session: string;
  status: "queued" | "running" | "done" | "failed";
  mask: RleMask;
  report?: {
    rho: number;
    decision: string;
    distance: number;
    denominator: number;
    iterations: number;
    evaluation_ratio: number;
  };
  images?: Record<string, string>;
  error?: string;
}

export interface RawImageDoc {
  height: number;
  width: number;
  dtype: string;
  order: string;
  values_b64: string;
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new Error(`${resp.status}: ${detail}`);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  async createSimulationSession(spec: {
    angles: number;
    detectors: number;
    sigma_rel: number;
    seed?: number;
    side?: number;
  }): Promise<{ id: string }> {
    const resp = await fetch(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ simulate: { phantom: "pe", ...spec } }),
    });
    return expectJson(resp);
  }

  async getSession(sid: string): Promise<SessionDoc> {
    return expectJson(await fetch(`${this.base}/sessions/${sid}`));
  }

  async getSessionImage(sid: string): Promise<RawImageDoc> {
    return expectJson(
      await fetch(`${this.base}/sessions/${sid}/image?format=rawj`));
  }

  async submitProbe(sid: string, mask: RleMask, alpha: number,
                    delta: number): Promise<{ id: string }> {
    const resp = await fetch(`${this.base}/sessions/${sid}/probes`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mask, alpha, delta }),
    });
    return expectJson(resp);
  }

  async getProbe(pid: string): Promise<ProbeDoc> {
    return expectJson(await fetch(`${this.base}/probes/${pid}`));
  }

  async getProbeImage(pid: string, kind: string): Promise<RawImageDoc> {
    return expectJson(
      await fetch(`${this.base}/probes/${pid}/images/${kind}?format=rawj`));
  }

  async echoMask(mask: RleMask): Promise<RleMask> {
    const resp = await fetch(`${this.base}/masks/echo`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ mask }),
    });
    const doc = await expectJson<{ mask: RleMask }>(resp);
    return doc.mask;
  }
}

/** Poll until the predicate says stop; resolves with the final document. */
export async function pollUntil<T>(
  fetchDoc: () => Promise<T>,
  isTerminal: (doc: T) => boolean,
  intervalMs = 1000,
  timeoutMs = 30 * 60 * 1000,
): Promise<T> {
  const t0 = Date.now();
  for (;;) {
    const doc = await fetchDoc();
    if (isTerminal(doc)) return doc;
    if (Date.now() - t0 > timeoutMs) {
      throw new Error("timed out waiting for the job");
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
}
