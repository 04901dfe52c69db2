/** Wire types mirroring the service's published response schemas. */

export interface LatentPoint {
  id: string;
  style: string;
  z_u: [number, number];
}

export interface AxisRanges {
  x: [number, number];
  y: [number, number];
}

export interface LatentMapResponse {
  points: LatentPoint[];
  axis_ranges: AxisRanges;
}

export interface GaussianTrace {
  mean: number[][];
  log_var: number[][];
}

export interface SynthesizeResponse {
  mode: string;
  utterance_id: string | null;
  word_count: number;
  phrase_count: number | null;
  z_utterance: number[] | null;
  word_latents: number[][];
  phrase_latents: number[][] | null;
  trajectories: {
    pitch: number[];
    channel: { index: number; values: number[] };
  };
  trace: {
    utterance: GaussianTrace | null;
    phrase: GaussianTrace | null;
    word: GaussianTrace | null;
  };
}

export interface SynthesizeRequestBody {
  utterance_id: string;
  mode: string;
  z_u?: [number, number];
  temperature: number;
  seed: number;
  channel?: number;
}

export const MODES = ["FG", "FG+AR", "FG+CP", "FG+CP+AR", "MG+CP", "MG+CP+AR"] as const;
export type Mode = (typeof MODES)[number];

export function isMgMode(mode: string): boolean {
  return mode.startsWith("MG");
}
