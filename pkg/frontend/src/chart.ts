/**
 * Canvas line chart with shaded highlight windows and point markers.
 * Geometry helpers are pure and exported for unit tests; only draw()
 * touches the canvas API.
 */

import type { Highlights, OverlayData, SeriesData } from "./types.js";

export interface ChartArea {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
}

export interface Extent {
  tMin: number;
  tMax: number;
  vMin: number;
  vMax: number;
}

export function computeExtent(series: SeriesData, overlay?: OverlayData | null): Extent {
  const ts = series.timestamps;
  const vals = series.values;
  let vMin = Math.min(...vals);
  let vMax = Math.max(...vals);
  if (overlay && overlay.values.length > 0) {
    // the injected overlay is a delta; keep the extent driven by raw values
  }
  if (vMin === vMax) {
    vMin -= 1;
    vMax += 1;
  }
  const span = vMax - vMin;
  return {
    tMin: ts[0],
    tMax: ts[ts.length - 1],
    vMin: vMin - 0.05 * span,
    vMax: vMax + 0.05 * span,
  };
}

export function xScale(t: number, extent: Extent, area: ChartArea): number {
  const usable = area.width - area.padLeft - area.padRight;
  if (extent.tMax === extent.tMin) return area.padLeft;
  return area.padLeft + ((t - extent.tMin) / (extent.tMax - extent.tMin)) * usable;
}

export function yScale(v: number, extent: Extent, area: ChartArea): number {
  const usable = area.height - area.padTop - area.padBottom;
  return area.padTop + (1 - (v - extent.vMin) / (extent.vMax - extent.vMin)) * usable;
}

export interface Rect {
  x: number;
  width: number;
}

/** Highlight window to a clipped horizontal rectangle in pixel space. */
export function windowToRect(
  start: number,
  end: number,
  extent: Extent,
  area: ChartArea,
): Rect | null {
  const clippedStart = Math.max(start, extent.tMin);
  const clippedEnd = Math.min(end, extent.tMax);
  if (clippedEnd <= clippedStart) return null;
  const x0 = xScale(clippedStart, extent, area);
  const x1 = xScale(clippedEnd, extent, area);
  return { x: x0, width: Math.max(1, x1 - x0) };
}

const DEFAULT_AREA: Omit<ChartArea, "width" | "height"> = {
  padLeft: 56,
  padRight: 12,
  padTop: 12,
  padBottom: 24,
};

export interface DrawOptions {
  series: SeriesData;
  highlights?: Highlights;
  overlay?: OverlayData | null;
  color?: string;
  overlayColor?: string;
  highlightColor?: string;
}

export function draw(canvas: HTMLCanvasElement, options: DrawOptions): void {
  const ctx = canvas.getContext("2d");
  if (!ctx || options.series.timestamps.length === 0) return;
  const dpr = window.devicePixelRatio || 1;
  const cssWidth = canvas.clientWidth || 800;
  const cssHeight = canvas.clientHeight || 300;
  canvas.width = cssWidth * dpr;
  canvas.height = cssHeight * dpr;
  ctx.scale(dpr, dpr);

  const area: ChartArea = { width: cssWidth, height: cssHeight, ...DEFAULT_AREA };
  const extent = computeExtent(options.series, options.overlay);
  ctx.clearRect(0, 0, cssWidth, cssHeight);

  // shaded highlight windows under everything else
  ctx.fillStyle = options.highlightColor ?? "rgba(255, 170, 0, 0.25)";
  for (const w of options.highlights?.windows ?? []) {
    const rect = windowToRect(w.start, w.end, extent, area);
    if (rect) {
      ctx.fillRect(rect.x, area.padTop, rect.width, cssHeight - area.padTop - area.padBottom);
    }
  }

  // axes
  ctx.strokeStyle = "#99a";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(area.padLeft, area.padTop);
  ctx.lineTo(area.padLeft, cssHeight - area.padBottom);
  ctx.lineTo(cssWidth - area.padRight, cssHeight - area.padBottom);
  ctx.stroke();
  ctx.fillStyle = "#667";
  ctx.font = "11px sans-serif";
  ctx.fillText(formatTick(extent.vMax), 4, area.padTop + 10);
  ctx.fillText(formatTick(extent.vMin), 4, cssHeight - area.padBottom);
  ctx.fillText(new Date(extent.tMin * 1000).toISOString().slice(0, 10), area.padLeft, cssHeight - 6);
  const endLabel = new Date(extent.tMax * 1000).toISOString().slice(0, 10);
  ctx.fillText(endLabel, cssWidth - area.padRight - 64, cssHeight - 6);

  // raw series
  ctx.strokeStyle = options.color ?? "#3069d0";
  ctx.lineWidth = 1.2;
  ctx.beginPath();
  options.series.timestamps.forEach((t, i) => {
    const x = xScale(t, extent, area);
    const y = yScale(options.series.values[i], extent, area);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();

  // injected overlay (delta values rendered around the series median)
  if (options.overlay && options.overlay.timestamps.length > 0) {
    const base = median(options.series.values);
    ctx.strokeStyle = options.overlayColor ?? "#e07020";
    ctx.lineWidth = 1.6;
    ctx.beginPath();
    options.overlay.timestamps.forEach((t, i) => {
      const x = xScale(t, extent, area);
      const y = yScale(base + options.overlay!.values[i], extent, area);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }

  // timestamp markers
  ctx.fillStyle = "#d03050";
  for (const t of options.highlights?.timestamps ?? []) {
    if (t < extent.tMin || t > extent.tMax) continue;
    const x = xScale(t, extent, area);
    ctx.beginPath();
    ctx.arc(x, area.padTop + 6, 4, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillRect(x - 0.5, area.padTop, 1, cssHeight - area.padTop - area.padBottom);
  }
}

function median(values: number[]): number {
  if (values.length === 0) return 0;
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

function formatTick(v: number): string {
  if (Math.abs(v) >= 100) return v.toFixed(0);
  return v.toFixed(2);
}
