import {describe, expect, it} from 'vitest';

import {baseProjection, clusterColor, hitTest, project} from '../src/scatter.js';
import {SpacePoint} from '../src/types.js';

const points: SpacePoint[] = [
  {id: 0, x: 0, y: 0, cluster: 0},
  {id: 1, x: 10, y: 0, cluster: 1},
  {id: 2, x: 0, y: 10, cluster: -1},
];

describe('scatter projection', () => {
  it('maps data bounds onto the canvas with y flipped', () => {
    const base = baseProjection(points, 200, 100);
    const t = {scale: 1, tx: 0, ty: 0};
    const [, yLow] = project(points[0], base, t);
    const [, yHigh] = project(points[2], base, t);
    expect(yHigh).toBeLessThan(yLow); // larger data y is higher on screen
    for (const p of points) {
      const [px, py] = project(p, base, t);
      expect(px).toBeGreaterThanOrEqual(0);
      expect(px).toBeLessThanOrEqual(200);
      expect(py).toBeGreaterThanOrEqual(0);
      expect(py).toBeLessThanOrEqual(100);
    }
  });

  it('hit test returns the nearest point within the radius', () => {
    const base = baseProjection(points, 200, 100);
    const t = {scale: 1, tx: 0, ty: 0};
    const [px, py] = project(points[1], base, t);
    expect(hitTest(points, base, t, px + 3, py - 2)?.id).toBe(1);
    expect(hitTest(points, base, t, px + 50, py + 50)).toBeNull();
  });

  it('hit test honors pan and zoom', () => {
    const base = baseProjection(points, 200, 100);
    const t = {scale: 2, tx: -40, ty: 13};
    const [px, py] = project(points[2], base, t);
    expect(hitTest(points, base, t, px, py)?.id).toBe(2);
  });

  it('noise renders gray, clusters cycle the palette', () => {
    expect(clusterColor(-1)).toBe('#9e9e9e');
    expect(clusterColor(0)).toBe(clusterColor(12)); // 12-color palette wraps
  });
});
