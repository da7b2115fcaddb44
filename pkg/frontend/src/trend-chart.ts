/**
 * Build-time trend: duration against build number as an inline SVG, points
 * colored by final state. Renders a placeholder when the job has no builds.
 */

import type { TrendSeries } from "./api.js";

const WIDTH = 640;
const HEIGHT = 240;
const PAD = 32;

const STATE_COLORS: Record<string, string> = {
  Success: "#4c1",
  Failure: "#e05d44",
  Aborted: "#e05d44",
};

export function renderTrendSvg(series: TrendSeries): string {
  const points = series.points;
  if (points.length === 0) return "";
  const maxDuration = Math.max(...points.map((p) => p.duration_ms), 1);
  const minId = Math.min(...points.map((p) => p.build_id));
  const maxId = Math.max(...points.map((p) => p.build_id));
  const spanId = Math.max(maxId - minId, 1);

  const x = (id: number) => PAD + ((id - minId) / spanId) * (WIDTH - 2 * PAD);
  const y = (ms: number) => HEIGHT - PAD - (ms / maxDuration) * (HEIGHT - 2 * PAD);

  const path = points
    .map((p, i) => `${i === 0 ? "M" : "L"}${x(p.build_id).toFixed(1)},${y(p.duration_ms).toFixed(1)}`)
    .join(" ");
  const circles = points
    .map(
      (p) =>
        `<circle class="trend-point" data-build-id="${p.build_id}" data-state="${p.state}" ` +
        `cx="${x(p.build_id).toFixed(1)}" cy="${y(p.duration_ms).toFixed(1)}" r="4" ` +
        `fill="${STATE_COLORS[p.state] ?? "#dfb317"}"><title>#${p.build_id}: ${p.duration_ms} ms (${p.state})</title></circle>`,
    )
    .join("");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}" class="trend">` +
    `<path d="${path}" fill="none" stroke="#999" stroke-width="1"/>` +
    circles +
    `</svg>`
  );
}

export class TrendChart {
  constructor(private root: HTMLElement) {
    this.root.classList.add("trend-chart");
  }

  render(series: TrendSeries): void {
    const title = `<h3>${series.job_name}</h3>`;
    if (series.points.length === 0) {
      this.root.innerHTML = `${title}<p class="placeholder">no builds</p>`;
      return;
    }
    this.root.innerHTML = title + renderTrendSvg(series);
  }

  pointCount(): number {
    return this.root.querySelectorAll(".trend-point").length;
  }
}
