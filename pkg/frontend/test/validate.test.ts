import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { assertValid, validationErrors, type Schema } from "../src/validate.js";

function loadSchema(name: string): Schema {
  const path = fileURLToPath(
    new URL(`../../src/mgvae/schemas/${name}.schema.json`, import.meta.url),
  );
  return JSON.parse(readFileSync(path, "utf-8")) as Schema;
}

const mapSchema = loadSchema("latent_map_response");
const synthSchema = loadSchema("synthesize_response");

const goodMap = {
  points: [
    { id: "a_0001", style: "happy", z_u: [0.5, -0.25] },
    { id: "b_0002", style: "sad", z_u: [-1.0, 2.0] },
  ],
  axis_ranges: { x: [-1.0, 0.5], y: [-0.25, 2.0] },
};

const goodSynth = {
  mode: "MG+CP+AR",
  utterance_id: "a_0001",
  word_count: 3,
  phrase_count: 2,
  z_utterance: [0.1, 0.2],
  word_latents: [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]],
  phrase_latents: [[0.0, 0.0], [1.0, 1.0]],
  trajectories: {
    pitch: [0.1, 0.2, 0.3],
    channel: { index: 3, values: [1.0, 2.0, 3.0] },
  },
  trace: {
    utterance: { mean: [[0.0, 0.0]], log_var: [[0.0, 0.0]] },
    phrase: null,
    word: { mean: [[0.1, 0.1]], log_var: [[-1.0, -1.0]] },
  },
};

describe("latent map schema", () => {
  it("accepts a valid payload", () => {
    expect(validationErrors(goodMap, mapSchema)).toEqual([]);
  });

  it("rejects a missing required property", () => {
    const bad = { points: goodMap.points };
    const errors = validationErrors(bad, mapSchema);
    expect(errors.some((e) => e.includes("axis_ranges"))).toBe(true);
  });

  it("rejects wrong-arity latent coordinates", () => {
    const bad = structuredClone(goodMap);
    bad.points[0]!.z_u = [0.5] as unknown as [number, number];
    expect(validationErrors(bad, mapSchema).length).toBeGreaterThan(0);
  });

  it("rejects unexpected extra properties", () => {
    const bad = { ...structuredClone(goodMap), extra: 1 };
    expect(validationErrors(bad, mapSchema)[0]).toContain("unexpected property");
  });

  it("rejects non-numeric coordinates instead of coercing", () => {
    const bad = structuredClone(goodMap);
    bad.points[1]!.z_u = ["1.0", 2.0] as unknown as [number, number];
    expect(validationErrors(bad, mapSchema)[0]).toMatch(/expected number/);
  });
});

describe("synthesize schema", () => {
  it("accepts a valid payload", () => {
    expect(validationErrors(goodSynth, synthSchema)).toEqual([]);
  });

  it("accepts FG-style payloads with null phrase data", () => {
    const fg = structuredClone(goodSynth);
    fg.mode = "FG";
    fg.phrase_latents = null as unknown as number[][];
    fg.z_utterance = null as unknown as number[];
    fg.trace.utterance = null as unknown as typeof fg.trace.utterance;
    fg.trace.word = null as unknown as typeof fg.trace.word;
    expect(validationErrors(fg, synthSchema)).toEqual([]);
  });

  it("rejects unknown modes via the enum", () => {
    const bad = structuredClone(goodSynth);
    bad.mode = "SOMETHING";
    expect(validationErrors(bad, synthSchema)[0]).toContain("enum");
  });

  it("rejects negative word counts via minimum", () => {
    const bad = structuredClone(goodSynth);
    bad.word_count = 0;
    expect(validationErrors(bad, synthSchema)[0]).toContain("minimum");
  });

  it("resolves $ref definitions for nested rows", () => {
    const bad = structuredClone(goodSynth);
    bad.word_latents = [[0.1], "nope"] as unknown as number[][];
    expect(validationErrors(bad, synthSchema).length).toBeGreaterThan(0);
  });

  it("assertValid throws with a path-qualified message", () => {
    const bad = structuredClone(goodSynth);
    bad.trajectories.pitch = ["x"] as unknown as number[];
    expect(() => assertValid(bad, synthSchema, "synthesis")).toThrow(/trajectories/);
  });
});
