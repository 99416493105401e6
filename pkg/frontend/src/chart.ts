// Recall-curve rendering as an inline SVG. Pure geometry helpers are
// exported separately so they can be unit tested without a DOM.

export interface CurvePoint {
  k: number;
  recall: number;
}

export function toPoints(k: number[], recall: number[] | null): CurvePoint[] {
  if (!recall) return [];
  return k.map((kk, i) => ({ k: kk, recall: recall[i] ?? 0 }));
}

/** Map curve points onto an SVG polyline string for a width x height box. */
export function polyline(
  points: CurvePoint[],
  width: number,
  height: number,
  maxK?: number,
): string {
  if (!points.length) return "";
  const kMax = maxK ?? points[points.length - 1].k;
  return points
    .map((p) => {
      const x = kMax > 1 ? ((p.k - 1) / (kMax - 1)) * width : 0;
      const y = height - p.recall * height;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export function renderChart(
  el: HTMLElement,
  k: number[],
  human: number[] | null,
  auto: number[] | null,
): void {
  const w = 360;
  const h = 160;
  const series = [
    { points: toPoints(k, auto), cls: "auto" },
    { points: toPoints(k, human), cls: "human" },
  ];
  const lines = series
    .filter((s) => s.points.length)
    .map(
      (s) =>
        `<polyline class="curve-${s.cls}" fill="none" ` +
        `points="${polyline(s.points, w, h)}"/>`,
    )
    .join("");
  el.innerHTML =
    `<svg viewBox="0 0 ${w} ${h}" preserveAspectRatio="none">` +
    `<rect class="chart-bg" width="${w}" height="${h}"/>` +
    lines +
    `</svg>` +
    `<div class="legend"><span class="key-human">human</span>` +
    `<span class="key-auto">auto</span></div>`;
}
