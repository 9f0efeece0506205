/** Pure view-state transitions; the UI is a function of this state. */

import {SpaceKind, SpacePoint, Transform, ViewState} from './types.js';

export function initialState(): ViewState {
  return {
    activeSpace: 'parametric',
    transform: {scale: 1, tx: 0, ty: 0},
    selectedId: null,
    endpointA: null,
    endpointB: null,
    alpha: 0,
    latentEdits: new Map(),
  };
}

export function toggleSpace(state: ViewState): ViewState {
  const next: SpaceKind =
    state.activeSpace === 'parametric' ? 'feature' : 'parametric';
  // selection identity survives the toggle; the transform resets per space
  return {...state, activeSpace: next, transform: {scale: 1, tx: 0, ty: 0}};
}

export function selectVessel(state: ViewState, id: number | null): ViewState {
  return {...state, selectedId: id, latentEdits: new Map()};
}

export function pickEndpoint(state: ViewState, id: number): ViewState {
  if (state.endpointA === null) return {...state, endpointA: id};
  if (state.endpointB === null) return {...state, endpointB: id};
  return {...state, endpointA: id, endpointB: null};
}

export function setAlpha(state: ViewState, alpha: number): ViewState {
  return {...state, alpha: Math.min(1, Math.max(0, alpha))};
}

export function editLatent(
  state: ViewState,
  dim: number,
  delta: number,
): ViewState {
  const edits = new Map(state.latentEdits);
  if (delta === 0) {
    edits.delete(dim);
  } else {
    edits.set(dim, delta);
  }
  return {...state, latentEdits: edits};
}

export function resetLatent(state: ViewState): ViewState {
  return {...state, latentEdits: new Map()};
}

/** Apply the panel's edits to a stored latent without mutating it. */
export function editedLatent(base: number[], edits: Map<number, number>): number[] {
  const z = base.slice();
  for (const [dim, delta] of edits) {
    if (dim >= 0 && dim < z.length) z[dim] += delta;
  }
  return z;
}

/** Data-space bounding box of a point set with a relative margin. */
export function dataBounds(
  points: SpacePoint[],
  margin = 0.05,
): {xMin: number; xMax: number; yMin: number; yMax: number} {
  if (points.length === 0) return {xMin: 0, xMax: 1, yMin: 0, yMax: 1};
  let xMin = Infinity, xMax = -Infinity, yMin = Infinity, yMax = -Infinity;
  for (const p of points) {
    xMin = Math.min(xMin, p.x);
    xMax = Math.max(xMax, p.x);
    yMin = Math.min(yMin, p.y);
    yMax = Math.max(yMax, p.y);
  }
  const mx = (xMax - xMin || 1) * margin;
  const my = (yMax - yMin || 1) * margin;
  return {xMin: xMin - mx, xMax: xMax + mx, yMin: yMin - my, yMax: yMax + my};
}

export function zoomAt(
  t: Transform,
  px: number,
  py: number,
  factor: number,
  minScale = 0.2,
  maxScale = 50,
): Transform {
  const scale = Math.min(maxScale, Math.max(minScale, t.scale * factor));
  const applied = scale / t.scale;
  // keep the cursor's data point fixed on screen
  return {
    scale,
    tx: px - (px - t.tx) * applied,
    ty: py - (py - t.ty) * applied,
  };
}

export function panBy(t: Transform, dx: number, dy: number): Transform {
  return {...t, tx: t.tx + dx, ty: t.ty + dy};
}
