/**
 * App wiring: load the latent map, let the user pick or drag a latent point,
 * choose a mode and temperature, and inspect the synthesized word-level
 * latents and feature trajectories.
 */

import { ApiClient, ServiceError } from "./api.js";
import { renderLatentPath, renderSummary, renderTrajectories } from "./panels.js";
import { ScatterPlot } from "./scatter.js";
import {
  beginRequest, clearError, completeRequest, failRequest, initialState,
  selectPoint, selectionComplete, setMode, usesLatentCursor, withMap,
  type ExplorerState,
} from "./state.js";
import { MODES } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "";
const api = new ApiClient(baseUrl);

let state: ExplorerState = initialState();

const scatter = new ScatterPlot(el("scatter"), {
  onSelect: (point, id) => {
    state = selectPoint(state, point, id);
    update({ rerenderScatter: true });
    void requestSynthesis();
  },
  onDragMove: (point) => {
    state = selectPoint(state, point);
    update({ rerenderScatter: true });
  },
});

function banner(message: string | null): void {
  const node = el("error-banner");
  node.textContent = message ?? "";
  node.classList.toggle("visible", message !== null);
}

function update(opts: { rerenderScatter?: boolean } = {}): void {
  banner(state.error);
  el("coords").textContent = state.selected
    ? `z_u = (${state.selected[0].toFixed(3)}, ${state.selected[1].toFixed(3)})`
    : "no point selected";
  el("utterance").textContent = state.utteranceId ?? "none";
  el("cursor-controls").classList.toggle("hidden", !usesLatentCursor(state));
  (el("synthesize") as HTMLButtonElement).disabled =
    !selectionComplete(state) || state.inFlight !== null;
  if (opts.rerenderScatter) {
    scatter.render(state.map, state.ranges, usesLatentCursor(state) ? state.selected : null);
  }
  if (state.lastResponse) {
    renderSummary(el("summary"), state.lastResponse);
    renderLatentPath(el("latent-path"), state.lastResponse);
    renderTrajectories(el("trajectories"), state.lastResponse);
  }
}

async function requestSynthesis(): Promise<void> {
  const utteranceId = state.utteranceId;
  if (!selectionComplete(state) || utteranceId === null) return;
  const { state: next, id } = beginRequest(state);
  state = next;
  update();
  try {
    const body = {
      utterance_id: utteranceId,
      mode: state.mode,
      temperature: state.temperature,
      seed: state.seed,
      ...(usesLatentCursor(state) && state.selected ? { z_u: state.selected } : {}),
    };
    const response = await api.synthesize(body);
    state = completeRequest(state, id, response);
  } catch (err) {
    const message = err instanceof ServiceError ? err.message : String(err);
    state = failRequest(state, id, message);
  }
  update({ rerenderScatter: true });
}

function wireControls(): void {
  const modeSelect = el<HTMLSelectElement>("mode");
  for (const mode of MODES) {
    const opt = document.createElement("option");
    opt.value = mode;
    opt.textContent = mode;
    modeSelect.appendChild(opt);
  }
  modeSelect.value = state.mode;
  modeSelect.addEventListener("change", () => {
    state = setMode(state, modeSelect.value);
    update({ rerenderScatter: true });
  });
  const temp = el<HTMLInputElement>("temperature");
  const tempLabel = el("temperature-value");
  temp.addEventListener("input", () => {
    state = { ...state, temperature: Number(temp.value) };
    tempLabel.textContent = Number(temp.value).toFixed(2);
  });
  const seed = el<HTMLInputElement>("seed");
  seed.addEventListener("change", () => {
    state = { ...state, seed: Number(seed.value) || 0 };
  });
  el<HTMLButtonElement>("synthesize").addEventListener("click", () => {
    state = clearError(state);
    void requestSynthesis();
  });
  el<HTMLButtonElement>("reload-map").addEventListener("click", () => void boot());
}

async function boot(): Promise<void> {
  try {
    await api.loadSchemas();
    const map = await api.fetchLatentMap();
    state = withMap(state, map);
    if (map.points.length > 0 && state.utteranceId === null) {
      const first = map.points[0];
      if (first) state = selectPoint(state, first.z_u, first.id);
    }
  } catch (err) {
    const message = err instanceof ServiceError ? err.message : String(err);
    state = { ...state, error: `failed to load latent map: ${message}` };
  }
  update({ rerenderScatter: true });
}

wireControls();
void boot();
