/** Immediate-mode canvas scatter plot: pan, zoom, hit testing, highlight.
 *
 * One draw call repaints every point (up to a few thousand), which is far
 * cheaper than DOM nodes per point and keeps identity stable across spaces.
 */

import {panBy, dataBounds, zoomAt} from './state.js';
import {SpacePoint, Transform} from './types.js';

/** Cluster palette; index -1 (noise) renders gray. Matches the SVG maps. */
export const PALETTE = [
  '#e6194b', '#3cb44b', '#ffe119', '#4363d8', '#f58231', '#911eb4',
  '#46f0f0', '#f032e6', '#bcf60c', '#fabebe', '#008080', '#e6beff',
];
export const NOISE_COLOR = '#9e9e9e';

export function clusterColor(cluster: number): string {
  return cluster < 0 ? NOISE_COLOR : PALETTE[cluster % PALETTE.length];
}

/** Base (unzoomed) mapping of data coordinates onto the canvas. */
export interface BaseProjection {
  sx: number;
  sy: number;
  ox: number;
  oy: number;
}

export function baseProjection(
  points: SpacePoint[],
  width: number,
  height: number,
): BaseProjection {
  const b = dataBounds(points);
  const sx = width / (b.xMax - b.xMin);
  const sy = height / (b.yMax - b.yMin);
  return {sx, sy: -sy, ox: -b.xMin * sx, oy: b.yMax * sy};
}

export function project(
  p: {x: number; y: number},
  base: BaseProjection,
  t: Transform,
): [number, number] {
  const px = p.x * base.sx + base.ox;
  const py = p.y * base.sy + base.oy;
  return [px * t.scale + t.tx, py * t.scale + t.ty];
}

/** Nearest point within `radius` canvas pixels, or null. */
export function hitTest(
  points: SpacePoint[],
  base: BaseProjection,
  t: Transform,
  x: number,
  y: number,
  radius = 8,
): SpacePoint | null {
  let best: SpacePoint | null = null;
  let bestD = radius * radius;
  for (const p of points) {
    const [px, py] = project(p, base, t);
    const d = (px - x) * (px - x) + (py - y) * (py - y);
    if (d <= bestD) {
      bestD = d;
      best = p;
    }
  }
  return best;
}

export interface ScatterCallbacks {
  onSelect: (point: SpacePoint) => void;
}

export class ScatterPlot {
  private points: SpacePoint[] = [];
  private base: BaseProjection = {sx: 1, sy: 1, ox: 0, oy: 0};
  transform: Transform = {scale: 1, tx: 0, ty: 0};
  selectedId: number | null = null;
  endpointIds: Array<number | null> = [null, null];

  private dragging = false;
  private moved = false;
  private lastX = 0;
  private lastY = 0;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly callbacks: ScatterCallbacks,
  ) {
    canvas.addEventListener('wheel', (e) => {
      e.preventDefault();
      const rect = canvas.getBoundingClientRect();
      const factor = Math.exp(-e.deltaY * 0.0015);
      this.transform = zoomAt(
        this.transform, e.clientX - rect.left, e.clientY - rect.top, factor,
      );
      this.draw();
    });
    canvas.addEventListener('pointerdown', (e) => {
      this.dragging = true;
      this.moved = false;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      canvas.setPointerCapture(e.pointerId);
    });
    canvas.addEventListener('pointermove', (e) => {
      if (!this.dragging) return;
      const dx = e.clientX - this.lastX;
      const dy = e.clientY - this.lastY;
      if (Math.abs(dx) + Math.abs(dy) > 2) this.moved = true;
      this.transform = panBy(this.transform, dx, dy);
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      this.draw();
    });
    canvas.addEventListener('pointerup', (e) => {
      this.dragging = false;
      if (this.moved) return; // a drag, not a click
      const rect = canvas.getBoundingClientRect();
      const hit = hitTest(
        this.points, this.base, this.transform,
        e.clientX - rect.left, e.clientY - rect.top,
      );
      if (hit) this.callbacks.onSelect(hit);
    });
  }

  setPoints(points: SpacePoint[], resetView: boolean): void {
    this.points = points;
    this.base = baseProjection(points, this.canvas.width, this.canvas.height);
    if (resetView) this.transform = {scale: 1, tx: 0, ty: 0};
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    for (const p of this.points) {
      const [x, y] = project(p, this.base, this.transform);
      ctx.fillStyle = clusterColor(p.cluster);
      ctx.beginPath();
      ctx.arc(x, y, 3, 0, Math.PI * 2);
      ctx.fill();
    }
    for (const [slot, id] of this.endpointIds.entries()) {
      if (id === null) continue;
      const p = this.points.find((q) => q.id === id);
      if (!p) continue;
      const [x, y] = project(p, this.base, this.transform);
      ctx.strokeStyle = slot === 0 ? '#d81b60' : '#3949ab';
      ctx.lineWidth = 2;
      ctx.strokeRect(x - 6, y - 6, 12, 12);
    }
    if (this.selectedId !== null) {
      const p = this.points.find((q) => q.id === this.selectedId);
      if (p) {
        const [x, y] = project(p, this.base, this.transform);
        ctx.strokeStyle = '#000';
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(x, y, 7, 0, Math.PI * 2);
        ctx.stroke();
      }
    }
  }
}
