/**
 * Result panels: the word-latent path through latent space, phrase latents,
 * and line charts of the returned feature trajectories. Every number shown
 * comes straight from the service payload.
 */

import { pathPoints, polylinePoints, type Viewport } from "./geometry.js";
import type { SynthesizeResponse } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function svgElement(width: number, height: number): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  return svg;
}

export function renderLatentPath(host: HTMLElement, response: SynthesizeResponse): void {
  host.replaceChildren();
  const vp: Viewport = { width: 300, height: 260, margin: 24 };
  const rows = response.word_latents;
  const phrase = response.phrase_latents ?? [];
  const all = rows.concat(phrase);
  if (response.z_utterance) all.push(response.z_utterance);
  const xs = all.map((r) => r[0] ?? 0);
  const ys = all.map((r) => r[1] ?? 0);
  const padded = (vals: number[]): [number, number] => {
    const lo = Math.min(...vals);
    const hi = Math.max(...vals);
    const span = hi - lo || 1;
    return [lo - 0.15 * span, hi + 0.15 * span];
  };
  const svg = svgElement(vp.width, vp.height);
  const pts = pathPoints(rows, padded(xs), padded(ys), vp);
  const line = document.createElementNS(SVG_NS, "polyline");
  line.setAttribute("points", pts.map(([a, b]) => `${a.toFixed(1)},${b.toFixed(1)}`).join(" "));
  line.classList.add("word-path");
  svg.appendChild(line);
  pts.forEach(([cx, cy], i) => {
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", cx.toFixed(1));
    dot.setAttribute("cy", cy.toFixed(1));
    dot.setAttribute("r", "5");
    dot.classList.add("word-dot");
    const idx = document.createElementNS(SVG_NS, "text");
    idx.setAttribute("x", (cx + 7).toFixed(1));
    idx.setAttribute("y", (cy - 7).toFixed(1));
    idx.classList.add("word-index");
    idx.textContent = String(i);
    svg.append(dot, idx);
  });
  for (const row of pathPoints(phrase, padded(xs), padded(ys), vp)) {
    const dot = document.createElementNS(SVG_NS, "circle");
    dot.setAttribute("cx", row[0].toFixed(1));
    dot.setAttribute("cy", row[1].toFixed(1));
    dot.setAttribute("r", "4");
    dot.classList.add("phrase-dot");
    svg.appendChild(dot);
  }
  if (response.z_utterance) {
    const [ux, uy] = pathPoints([response.z_utterance], padded(xs), padded(ys), vp)[0] ?? [0, 0];
    const mark = document.createElementNS(SVG_NS, "rect");
    mark.setAttribute("x", (ux - 4).toFixed(1));
    mark.setAttribute("y", (uy - 4).toFixed(1));
    mark.setAttribute("width", "8");
    mark.setAttribute("height", "8");
    mark.classList.add("utterance-mark");
    svg.appendChild(mark);
  }
  host.appendChild(svg);
}

export function renderTrajectories(host: HTMLElement, response: SynthesizeResponse): void {
  host.replaceChildren();
  const vp: Viewport = { width: 560, height: 130, margin: 18 };
  const series: Array<[string, number[]]> = [
    ["pitch channel", response.trajectories.pitch],
    [`channel ${response.trajectories.channel.index}`, response.trajectories.channel.values],
  ];
  for (const [label, values] of series) {
    const wrap = document.createElement("figure");
    const caption = document.createElement("figcaption");
    caption.textContent = `${label} (${values.length} frames)`;
    const svg = svgElement(vp.width, vp.height);
    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute("points", polylinePoints(values, vp));
    line.classList.add("trajectory");
    svg.appendChild(line);
    wrap.append(caption, svg);
    host.appendChild(wrap);
  }
}

export function renderSummary(host: HTMLElement, response: SynthesizeResponse): void {
  const rows: Array<[string, string]> = [
    ["mode", response.mode],
    ["utterance", response.utterance_id ?? "(text-analogue spec)"],
    ["words", String(response.word_count)],
    ["phrases", response.phrase_count === null ? "-" : String(response.phrase_count)],
    ["z_u", response.z_utterance ? response.z_utterance.map((v) => v.toFixed(3)).join(", ") : "-"],
  ];
  host.replaceChildren();
  for (const [k, v] of rows) {
    const div = document.createElement("div");
    const key = document.createElement("span");
    key.classList.add("summary-key");
    key.textContent = k;
    const val = document.createElement("span");
    val.textContent = v;
    div.append(key, val);
    host.appendChild(div);
  }
}
