/**
 * Interactive latent-space scatter: one point per utterance colored by style,
 * a legend, and a draggable cursor marking the selected latent.
 */

import { makeTransform, styleColor, type Viewport } from "./geometry.js";
import type { PaddedRanges } from "./state.js";
import type { LatentMapResponse } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface ScatterCallbacks {
  onSelect: (point: [number, number], utteranceId?: string) => void;
  onDragMove: (point: [number, number]) => void;
}

export class ScatterPlot {
  private readonly vp: Viewport = { width: 520, height: 420, margin: 30 };
  private svg: SVGSVGElement;
  private cursor: SVGGElement | null = null;
  private ranges: PaddedRanges | null = null;
  private dragging = false;

  constructor(private readonly host: HTMLElement,
              private readonly callbacks: ScatterCallbacks) {
    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("viewBox", `0 0 ${this.vp.width} ${this.vp.height}`);
    this.svg.classList.add("scatter");
    host.appendChild(this.svg);
    this.svg.addEventListener("pointerdown", (ev) => this.pointer(ev, "down"));
    this.svg.addEventListener("pointermove", (ev) => this.pointer(ev, "move"));
    window.addEventListener("pointerup", () => (this.dragging = false));
  }

  private dataPoint(ev: PointerEvent): [number, number] | null {
    if (!this.ranges) return null;
    const rect = this.svg.getBoundingClientRect();
    const px = ((ev.clientX - rect.left) / rect.width) * this.vp.width;
    const py = ((ev.clientY - rect.top) / rect.height) * this.vp.height;
    const t = makeTransform(this.ranges.x, this.ranges.y, this.vp);
    return t.fromPx([px, py]);
  }

  private pointer(ev: PointerEvent, kind: "down" | "move"): void {
    const point = this.dataPoint(ev);
    if (!point) return;
    if (kind === "down") {
      this.dragging = true;
      this.callbacks.onSelect(point);
    } else if (this.dragging) {
      this.callbacks.onDragMove(point);
    }
  }

  render(map: LatentMapResponse | null, ranges: PaddedRanges | null,
         selected: [number, number] | null): void {
    this.ranges = ranges;
    this.svg.replaceChildren();
    this.cursor = null;
    if (!map || !ranges || map.points.length === 0) {
      const note = document.createElementNS(SVG_NS, "text");
      note.setAttribute("x", String(this.vp.width / 2));
      note.setAttribute("y", String(this.vp.height / 2));
      note.setAttribute("text-anchor", "middle");
      note.classList.add("empty-note");
      note.textContent = "no latent map loaded";
      this.svg.appendChild(note);
      return;
    }
    const styles = [...new Set(map.points.map((p) => p.style))].sort();
    const t = makeTransform(ranges.x, ranges.y, this.vp);
    for (const p of map.points) {
      const [cx, cy] = t.toPx(p.z_u);
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", cx.toFixed(1));
      dot.setAttribute("cy", cy.toFixed(1));
      dot.setAttribute("r", "3");
      dot.setAttribute("fill", styleColor(p.style, styles));
      dot.classList.add("map-point");
      dot.addEventListener("pointerdown", (ev) => {
        ev.stopPropagation();
        this.callbacks.onSelect(p.z_u, p.id);
      });
      const tip = document.createElementNS(SVG_NS, "title");
      tip.textContent = `${p.id} (${p.style})`;
      dot.appendChild(tip);
      this.svg.appendChild(dot);
    }
    styles.forEach((style, i) => {
      const g = document.createElementNS(SVG_NS, "g");
      const box = document.createElementNS(SVG_NS, "rect");
      box.setAttribute("x", String(this.vp.width - 110));
      box.setAttribute("y", String(16 + 18 * i));
      box.setAttribute("width", "10");
      box.setAttribute("height", "10");
      box.setAttribute("fill", styleColor(style, styles));
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(this.vp.width - 95));
      label.setAttribute("y", String(25 + 18 * i));
      label.classList.add("legend-label");
      label.textContent = style;
      g.append(box, label);
      g.classList.add("legend-entry");
      this.svg.appendChild(g);
    });
    if (selected) this.renderCursor(selected, t.toPx(selected));
  }

  private renderCursor(data: [number, number], px: [number, number]): void {
    const g = document.createElementNS(SVG_NS, "g");
    g.classList.add("cursor");
    const [cx, cy] = px;
    const outer = document.createElementNS(SVG_NS, "circle");
    outer.setAttribute("cx", cx.toFixed(1));
    outer.setAttribute("cy", cy.toFixed(1));
    outer.setAttribute("r", "8");
    outer.classList.add("cursor-ring");
    const h = document.createElementNS(SVG_NS, "line");
    h.setAttribute("x1", (cx - 12).toFixed(1));
    h.setAttribute("x2", (cx + 12).toFixed(1));
    h.setAttribute("y1", cy.toFixed(1));
    h.setAttribute("y2", cy.toFixed(1));
    const v = document.createElementNS(SVG_NS, "line");
    v.setAttribute("y1", (cy - 12).toFixed(1));
    v.setAttribute("y2", (cy + 12).toFixed(1));
    v.setAttribute("x1", cx.toFixed(1));
    v.setAttribute("x2", cx.toFixed(1));
    g.append(outer, h, v);
    this.svg.appendChild(g);
    this.cursor = g;
  }
}
