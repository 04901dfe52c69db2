/** Pure data-to-pixel geometry shared by the scatter plot and line charts. */

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export interface Transform {
  toPx: (p: [number, number]) => [number, number];
  fromPx: (p: [number, number]) => [number, number];
}

export function makeTransform(xr: [number, number], yr: [number, number],
                              vp: Viewport): Transform {
  const spanX = xr[1] - xr[0] || 1;
  const spanY = yr[1] - yr[0] || 1;
  const innerW = vp.width - 2 * vp.margin;
  const innerH = vp.height - 2 * vp.margin;
  return {
    toPx: ([x, y]) => [
      vp.margin + ((x - xr[0]) / spanX) * innerW,
      vp.height - vp.margin - ((y - yr[0]) / spanY) * innerH,
    ],
    fromPx: ([px, py]) => [
      xr[0] + ((px - vp.margin) / innerW) * spanX,
      yr[0] + ((vp.height - vp.margin - py) / innerH) * spanY,
    ],
  };
}

export function polylinePoints(values: number[], vp: Viewport): string {
  if (values.length === 0) return "";
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    lo -= 1;
    hi += 1;
  }
  const t = makeTransform([0, Math.max(values.length - 1, 1)], [lo, hi], vp);
  return values
    .map((v, i) => t.toPx([i, v]).map((c) => c.toFixed(1)).join(","))
    .join(" ");
}

export function pathPoints(rows: number[][], xr: [number, number], yr: [number, number],
                           vp: Viewport): [number, number][] {
  const t = makeTransform(xr, yr, vp);
  return rows.map((row) => t.toPx([row[0] ?? 0, row[1] ?? 0]));
}

const PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
                 "#76b7b2", "#edc948", "#ff9da7"];

export function styleColor(style: string, styles: string[]): string {
  const idx = styles.indexOf(style);
  return PALETTE[(idx >= 0 ? idx : styles.length) % PALETTE.length] ?? "#888888";
}
