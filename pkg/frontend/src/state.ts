/**
 * Explorer state and its pure update rules.
 *
 * Invariants: the selected latent stays inside the padded axis ranges, a
 * synthesis request is only issued with a complete selection, and only the
 * newest in-flight request may publish its response.
 */

import type { LatentMapResponse, SynthesizeResponse } from "./types.js";
import { isMgMode } from "./types.js";

export const AXIS_PADDING = 0.1;

export interface PaddedRanges {
  x: [number, number];
  y: [number, number];
}

export interface ExplorerState {
  map: LatentMapResponse | null;
  ranges: PaddedRanges | null;
  selected: [number, number] | null;
  utteranceId: string | null;
  mode: string;
  temperature: number;
  seed: number;
  lastResponse: SynthesizeResponse | null;
  error: string | null;
  requestCounter: number;
  inFlight: number | null;
}

export function initialState(): ExplorerState {
  return {
    map: null,
    ranges: null,
    selected: null,
    utteranceId: null,
    mode: "MG+CP+AR",
    temperature: 0.0,
    seed: 0,
    lastResponse: null,
    error: null,
    requestCounter: 0,
    inFlight: null,
  };
}

export function padRanges(ranges: { x: [number, number]; y: [number, number] },
                          padding = AXIS_PADDING): PaddedRanges {
  const pad = (lo: number, hi: number): [number, number] => {
    const span = hi - lo || 1.0;
    return [lo - padding * span, hi + padding * span];
  };
  return { x: pad(ranges.x[0], ranges.x[1]), y: pad(ranges.y[0], ranges.y[1]) };
}

export function clampToRanges(point: [number, number], ranges: PaddedRanges): [number, number] {
  const clamp = (v: number, [lo, hi]: [number, number]) => Math.min(hi, Math.max(lo, v));
  return [clamp(point[0], ranges.x), clamp(point[1], ranges.y)];
}

export function withMap(state: ExplorerState, map: LatentMapResponse): ExplorerState {
  const ranges = padRanges(map.axis_ranges);
  const selected = state.selected ? clampToRanges(state.selected, ranges) : null;
  return { ...state, map, ranges, selected, error: null };
}

export function selectPoint(state: ExplorerState, point: [number, number],
                            utteranceId?: string): ExplorerState {
  const selected = state.ranges ? clampToRanges(point, state.ranges) : point;
  return {
    ...state,
    selected,
    utteranceId: utteranceId ?? state.utteranceId,
  };
}

export function setMode(state: ExplorerState, mode: string): ExplorerState {
  return { ...state, mode };
}

/** z_u travels with the request only for MG modes; FG-family modes ignore it. */
export function usesLatentCursor(state: ExplorerState): boolean {
  return isMgMode(state.mode);
}

export function selectionComplete(state: ExplorerState): boolean {
  if (state.utteranceId === null) return false;
  if (usesLatentCursor(state) && state.selected === null) return false;
  return true;
}

export function beginRequest(state: ExplorerState): { state: ExplorerState; id: number } {
  const id = state.requestCounter + 1;
  return { state: { ...state, requestCounter: id, inFlight: id }, id };
}

/** Stale responses (an older id than the newest request) are dropped. */
export function completeRequest(state: ExplorerState, id: number,
                                response: SynthesizeResponse): ExplorerState {
  if (id !== state.requestCounter) return state;
  return { ...state, inFlight: null, lastResponse: response, error: null };
}

export function failRequest(state: ExplorerState, id: number, message: string): ExplorerState {
  if (id !== state.requestCounter) return state;
  // the banner reports the failure; previous results stay on screen
  return { ...state, inFlight: null, error: message };
}

export function clearError(state: ExplorerState): ExplorerState {
  return { ...state, error: null };
}
