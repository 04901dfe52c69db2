import { describe, expect, it } from "vitest";
import { makeTransform, polylinePoints, pathPoints, styleColor } from "../src/geometry.js";

const vp = { width: 100, height: 100, margin: 10 };

describe("transform", () => {
  it("round-trips data and pixel coordinates", () => {
    const t = makeTransform([-2, 2], [0, 10], vp);
    const [px, py] = t.toPx([1.0, 7.5]);
    const [x, y] = t.fromPx([px, py]);
    expect(x).toBeCloseTo(1.0, 10);
    expect(y).toBeCloseTo(7.5, 10);
  });

  it("maps the extent onto the margins with y flipped", () => {
    const t = makeTransform([0, 1], [0, 1], vp);
    expect(t.toPx([0, 0])).toEqual([10, 90]);
    expect(t.toPx([1, 1])).toEqual([90, 10]);
  });
});

describe("polyline", () => {
  it("emits one point per value", () => {
    const pts = polylinePoints([0, 1, 2, 1], vp);
    expect(pts.split(" ")).toHaveLength(4);
  });

  it("handles constant series without dividing by zero", () => {
    const pts = polylinePoints([3, 3, 3], vp);
    expect(pts).not.toContain("NaN");
  });

  it("handles empty input", () => {
    expect(polylinePoints([], vp)).toBe("");
  });
});

describe("path points and colors", () => {
  it("projects latent rows through the shared transform", () => {
    const pts = pathPoints([[0, 0], [1, 1]], [0, 1], [0, 1], vp);
    expect(pts[0]).toEqual([10, 90]);
    expect(pts[1]).toEqual([90, 10]);
  });

  it("assigns stable distinct colors per style", () => {
    const styles = ["happy", "mixed", "normal", "sad"];
    const colors = styles.map((s) => styleColor(s, styles));
    expect(new Set(colors).size).toBe(4);
    expect(styleColor("happy", styles)).toBe(colors[0]);
  });
});
