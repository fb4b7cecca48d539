/**
 * Application shell: session lifecycle, mask drawing, probe submission,
 * and the report view. Plain DOM, no framework; state lives in one object
 * and every change goes through render().
 */

import { ApiClient, pollUntil, ProbeDoc, RawImageDoc } from "./api.js";
import { badgeFor, gaugePercentText, gaugeValue } from "./badge.js";
import { MaskEditor, Stroke } from "./raster.js";
import { countOn, encodeRle } from "./rle.js";
import {
  decodeValues, defaultWindowLevel, toPixels, WindowLevel,
} from "./windowing.js";

interface PaneImage {
  label: string;
  values: Float64Array;
  height: number;
  width: number;
}

interface AppState {
  sessionId: string | null;
  sessionStatus: string;
  side: number;
  baseImage: PaneImage | null;
  editor: MaskEditor | null;
  brush: number;
  erase: boolean;
  inFlight: boolean;
  probe: ProbeDoc | null;
  panes: PaneImage[];
  wl: WindowLevel | null;
  banner: string | null;
  validation: string | null;
}

const state: AppState = {
  sessionId: null,
  sessionStatus: "no session",
  side: 0,
  baseImage: null,
  editor: null,
  brush: 4,
  erase: false,
  inFlight: false,
  probe: null,
  panes: [],
  wl: null,
  banner: null,
  validation: null,
};

const api = new ApiClient(
  new URLSearchParams(location.search).get("api") ?? "");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function paneFromDoc(label: string, doc: RawImageDoc): PaneImage {
  return {
    label,
    values: decodeValues(doc.values_b64),
    height: doc.height,
    width: doc.width,
  };
}

function drawPane(canvas: HTMLCanvasElement, pane: PaneImage,
                  wl: WindowLevel): void {
  canvas.width = pane.width;
  canvas.height = pane.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const img = new ImageData(toPixels(pane.values, wl), pane.width,
                            pane.height);
  ctx.putImageData(img, 0, 0);
}

function drawEditor(): void {
  const canvas = el<HTMLCanvasElement>("draw-canvas");
  if (!state.baseImage || !state.editor || !state.wl) return;
  drawPane(canvas, state.baseImage, state.wl);
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const overlay = ctx.getImageData(0, 0, canvas.width, canvas.height);
  const bits = state.editor.grid().bits;
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      overlay.data[4 * i] = Math.min(255, overlay.data[4 * i] + 120);
      overlay.data[4 * i + 1] = Math.round(overlay.data[4 * i + 1] * 0.4);
      overlay.data[4 * i + 2] = Math.round(overlay.data[4 * i + 2] * 0.4);
    }
  }
  ctx.putImageData(overlay, 0, 0);
}

function render(): void {
  el("session-status").textContent =
    `session: ${state.sessionId ?? "none"} (${state.sessionStatus})`;
  el("banner").textContent = state.banner ?? "";
  el("banner").style.display = state.banner ? "block" : "none";
  el("validation").textContent = state.validation ?? "";

  const submit = el<HTMLButtonElement>("submit-probe");
  submit.disabled = state.inFlight || !state.editor
    || state.sessionStatus !== "ready";
  submit.textContent = state.inFlight ? "probe running..." : "submit probe";

  const report = state.probe?.report;
  const reportBox = el("report");
  if (report && state.probe?.status === "done") {
    reportBox.style.display = "block";
    el("badge").textContent = badgeFor(report);
    el("badge").className =
      report.decision === "reject-H0" ? "badge reject" : "badge";
    el("gauge-text").textContent = gaugePercentText(report);
    el<HTMLProgressElement>("gauge").value = gaugeValue(report);
    el("report-detail").textContent =
      `rho = ${report.rho.toFixed(4)}, ${report.iterations} iterations, ` +
      `evaluation ratio ${report.evaluation_ratio.toFixed(3)}`;
  } else {
    reportBox.style.display = "none";
  }

  const panesBox = el("panes");
  panesBox.style.display = state.panes.length ? "flex" : "none";
  if (state.panes.length && state.wl) {
    state.panes.forEach((pane, i) => {
      const canvas = el<HTMLCanvasElement>(`pane-${i}`);
      drawPane(canvas, pane, state.wl as WindowLevel);
      el(`pane-label-${i}`).textContent = pane.label;
    });
  }
  drawEditor();
}

async function startSession(): Promise<void> {
  const angles = Number(el<HTMLInputElement>("angles").value);
  const sigma = Number(el<HTMLInputElement>("sigma").value);
  state.banner = null;
  state.probe = null;
  state.panes = [];
  try {
    const created = await api.createSimulationSession({
      angles,
      detectors: 450,
      sigma_rel: sigma,
      side: 128,
      seed: 0,
    });
    state.sessionId = created.id;
    state.sessionStatus = "queued";
    render();
    const doc = await pollUntil(
      () => api.getSession(created.id),
      (d) => d.status === "ready" || d.status === "failed");
    state.sessionStatus = doc.status;
    if (doc.status === "failed") {
      state.banner = `reconstruction failed: ${doc.error ?? "unknown"}`;
      render();
      return;
    }
    const imageDoc = await api.getSessionImage(created.id);
    state.side = imageDoc.height;
    state.baseImage = paneFromDoc("reconstruction", imageDoc);
    state.wl = defaultWindowLevel(state.baseImage.values);
    state.editor = new MaskEditor(imageDoc.height, imageDoc.width);
    syncWindowLevelInputs();
  } catch (err) {
    state.banner = String(err);
  }
  render();
}

async function submitProbe(): Promise<void> {
  if (!state.editor || !state.sessionId || state.inFlight) return;
  const grid = state.editor.grid();
  if (countOn(grid) === 0) {
    // blocked client-side, nothing is sent
    state.validation = "draw a mask first: an empty mask probes nothing";
    render();
    return;
  }
  state.validation = null;
  state.inFlight = true;
  state.banner = null;
  render();
  try {
    const mask = {
      height: grid.height,
      width: grid.width,
      rle: encodeRle(grid),
    };
    const submitted = await api.submitProbe(state.sessionId, mask, 0.01,
                                            1e-3);
    const doc = await pollUntil(
      () => api.getProbe(submitted.id),
      (d) => d.status === "done" || d.status === "failed");
    state.probe = doc;
    if (doc.status === "failed") {
      state.banner = `probe failed: ${doc.error ?? "unknown"}`;
    } else {
      const kinds: Array<[string, string]> = [
        ["xmap", "reconstruction"],
        ["xhatc", "closest credible image"],
        ["diff", "credible minus structure-free"],
      ];
      state.panes = [];
      for (const [kind, label] of kinds) {
        state.panes.push(
          paneFromDoc(label, await api.getProbeImage(doc.id, kind)));
      }
    }
  } catch (err) {
    state.banner = String(err);
  }
  state.inFlight = false;
  render();
}

function canvasPoint(event: PointerEvent): { x: number; y: number } {
  const canvas = el<HTMLCanvasElement>("draw-canvas");
  const rect = canvas.getBoundingClientRect();
  return {
    x: (event.clientX - rect.left) * (canvas.width / rect.width),
    y: (event.clientY - rect.top) * (canvas.height / rect.height),
  };
}

function wireDrawing(): void {
  const canvas = el<HTMLCanvasElement>("draw-canvas");
  let active: Stroke | null = null;
  canvas.addEventListener("pointerdown", (event) => {
    if (!state.editor) return;
    active = {
      points: [canvasPoint(event)],
      radius: state.brush,
      erase: state.erase,
    };
    canvas.setPointerCapture(event.pointerId);
  });
  canvas.addEventListener("pointermove", (event) => {
    if (!active) return;
    active.points.push(canvasPoint(event));
  });
  canvas.addEventListener("pointerup", () => {
    if (active && state.editor) {
      state.editor.apply(active);
      state.validation = null;
      render();
    }
    active = null;
  });
}

function syncWindowLevelInputs(): void {
  if (!state.wl) return;
  el<HTMLInputElement>("window").value = String(state.wl.window);
  el<HTMLInputElement>("level").value = String(state.wl.level);
}

function wireControls(): void {
  el("start-session").addEventListener("click", () => {
    void startSession();
  });
  el("submit-probe").addEventListener("click", () => {
    void submitProbe();
  });
  el("undo").addEventListener("click", () => {
    if (state.editor?.undo()) render();
  });
  el("clear").addEventListener("click", () => {
    state.editor?.clear();
    render();
  });
  el<HTMLInputElement>("brush").addEventListener("input", (event) => {
    state.brush = Number((event.target as HTMLInputElement).value);
  });
  el<HTMLInputElement>("erase").addEventListener("change", (event) => {
    state.erase = (event.target as HTMLInputElement).checked;
  });
  for (const id of ["window", "level"] as const) {
    el<HTMLInputElement>(id).addEventListener("input", () => {
      if (!state.wl) return;
      state.wl = {
        window: Number(el<HTMLInputElement>("window").value),
        level: Number(el<HTMLInputElement>("level").value),
      };
      render();
    });
  }
}

export function boot(): void {
  wireControls();
  wireDrawing();
  render();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  boot();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", boot);
}
