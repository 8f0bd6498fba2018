// Hand-built SVG chart markup: trajectory lines, dose bars with OAR limit
// guides, and the Q-value bar row. Pure string generation, no DOM required.

import { COMPARTMENTS, TrajectoryPayload } from "./api.js";

const SERIES_COLORS: Record<string, string> = {
  plasma: "#1f77b4",
  liver: "#d62728",
  kidney: "#9467bd",
  tumor: "#2ca02c",
};

export interface ChartSize {
  width: number;
  height: number;
  pad: number;
}

export const DEFAULT_SIZE: ChartSize = { width: 560, height: 260, pad: 36 };

function scale(value: number, lo: number, hi: number, outLo: number,
               outHi: number): number {
  if (hi === lo) return (outLo + outHi) / 2;
  return outLo + ((value - lo) / (hi - lo)) * (outHi - outLo);
}

export function linePath(xs: number[], ys: number[], xMax: number, yMax: number,
                         size: ChartSize): string {
  const parts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    const x = scale(xs[i]!, 0, xMax, size.pad, size.width - size.pad);
    const y = scale(ys[i]!, 0, yMax, size.height - size.pad, size.pad);
    parts.push(`${i === 0 ? "M" : "L"}${x.toFixed(2)},${y.toFixed(2)}`);
  }
  return parts.join(" ");
}

export function trajectoryChart(traj: TrajectoryPayload,
                                size: ChartSize = DEFAULT_SIZE): string {
  const xMax = traj.time_h[traj.time_h.length - 1] ?? 1;
  const yMax = Math.max(...COMPARTMENTS.map((c) => Math.max(...traj[c])), 1e-9);
  const paths = COMPARTMENTS.map((c) =>
    `<path d="${linePath(traj.time_h, traj[c], xMax, yMax, size)}" ` +
    `fill="none" stroke="${SERIES_COLORS[c]}" stroke-width="1.5" ` +
    `data-series="${c}"/>`);
  const legend = COMPARTMENTS.map((c, i) =>
    `<text x="${size.pad + 84 * i}" y="14" fill="${SERIES_COLORS[c]}" ` +
    `font-size="11">${c}</text>`);
  return svg(size, [...paths, ...legend,
                    axisLabel(size, `time (h), 0..${xMax}`),
                    yAxisLabel(size, `MBq/L, 0..${yMax.toPrecision(3)}`)]);
}

export interface DoseBar {
  organ: string;
  cumulativeGy: number;
  perCycleGy: number;
  limitGy: number | null;
}

/** Stacked bars: prior dose plus the probed cycle's increment, with a limit
 * guide line per organ that has one. */
export function doseBarsChart(bars: DoseBar[],
                              size: ChartSize = DEFAULT_SIZE): string {
  const yMax = Math.max(
    ...bars.map((b) => Math.max(b.cumulativeGy, b.limitGy ?? 0)), 1e-9) * 1.15;
  const slot = (size.width - 2 * size.pad) / bars.length;
  const parts: string[] = [];
  bars.forEach((b, i) => {
    const x = size.pad + slot * i + slot * 0.2;
    const w = slot * 0.45;
    const yBase = size.height - size.pad;
    const prior = b.cumulativeGy - b.perCycleGy;
    const yPrior = scale(prior, 0, yMax, yBase, size.pad);
    const yTotal = scale(b.cumulativeGy, 0, yMax, yBase, size.pad);
    parts.push(`<rect x="${x.toFixed(2)}" y="${yPrior.toFixed(2)}" ` +
      `width="${w.toFixed(2)}" height="${(yBase - yPrior).toFixed(2)}" ` +
      `fill="#8da0cb" data-bar="${b.organ}-prior"/>`);
    parts.push(`<rect x="${x.toFixed(2)}" y="${yTotal.toFixed(2)}" ` +
      `width="${w.toFixed(2)}" height="${(yPrior - yTotal).toFixed(2)}" ` +
      `fill="#fc8d62" data-bar="${b.organ}-new"/>`);
    parts.push(`<text x="${(x + w / 2).toFixed(2)}" y="${size.height - 8}" ` +
      `text-anchor="middle" font-size="11">${b.organ}</text>`);
    if (b.limitGy !== null) {
      const yLimit = scale(b.limitGy, 0, yMax, yBase, size.pad);
      parts.push(`<line x1="${(size.pad + slot * i).toFixed(2)}" ` +
        `x2="${(size.pad + slot * (i + 1)).toFixed(2)}" ` +
        `y1="${yLimit.toFixed(2)}" y2="${yLimit.toFixed(2)}" ` +
        `stroke="#d62728" stroke-dasharray="5 3" data-limit="${b.organ}"/>`);
    }
  });
  return svg(size, [...parts, yAxisLabel(size, `Gy, 0..${yMax.toPrecision(3)}`)]);
}

export interface QBar {
  actionMbq: string;
  value: number;
  recommended: boolean;
}

export function qBarChart(bars: QBar[], size: ChartSize = DEFAULT_SIZE): string {
  const values = bars.map((b) => b.value);
  const lo = Math.min(...values, 0);
  const hi = Math.max(...values, 1e-9);
  const slot = (size.width - 2 * size.pad) / bars.length;
  const yZero = scale(0, lo, hi, size.height - size.pad, size.pad);
  const parts = bars.flatMap((b, i) => {
    const x = size.pad + slot * i + slot * 0.2;
    const y = scale(b.value, lo, hi, size.height - size.pad, size.pad);
    const top = Math.min(y, yZero);
    const height = Math.abs(yZero - y);
    return [
      `<rect x="${x.toFixed(2)}" y="${top.toFixed(2)}" ` +
      `width="${(slot * 0.6).toFixed(2)}" height="${height.toFixed(2)}" ` +
      `fill="${b.recommended ? "#2ca02c" : "#bbbbbb"}" ` +
      `data-q="${b.actionMbq}"${b.recommended ? ' data-recommended="true"' : ""}/>`,
      `<text x="${(x + slot * 0.3).toFixed(2)}" y="${size.height - 8}" ` +
      `text-anchor="middle" font-size="11">${b.actionMbq} MBq</text>`,
    ];
  });
  return svg(size, parts);
}

function axisLabel(size: ChartSize, text: string): string {
  return `<text x="${size.width / 2}" y="${size.height - 2}" ` +
    `text-anchor="middle" font-size="10" fill="#555">${text}</text>`;
}

function yAxisLabel(size: ChartSize, text: string): string {
  return `<text x="4" y="${size.pad - 8}" font-size="10" fill="#555">${text}</text>`;
}

function svg(size: ChartSize, children: string[]): string {
  return `<svg viewBox="0 0 ${size.width} ${size.height}" ` +
    `xmlns="http://www.w3.org/2000/svg">${children.join("")}</svg>`;
}
