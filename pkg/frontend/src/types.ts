/** Wire types of the explorer API and the client-side view state. */

export type SpaceKind = 'parametric' | 'feature';

export interface SpacePoint {
  id: number;
  x: number;
  y: number;
  cluster: number;
}

export interface SpacesResponse {
  spaces: Array<{kind: SpaceKind; points: SpacePoint[]}>;
}

export interface VesselDetail {
  id: number;
  params: {
    height: number;
    base_width: number;
    top_width: number;
    ctrl_r: number;
    ctrl_h: number;
  };
  latent: number[];
  /** Base64 of the LSB-first bit-packed R*R central slice (index x*R + y). */
  section: string;
  occupied_count: number;
  clusters?: Record<string, number>;
}

export interface DecodeResponse {
  resolution: number;
  voxels: string;
  occupied_count: number;
  section: string;
}

export interface InterpolateStep {
  alpha: number;
  section: string;
  occupied_count: number;
}

export interface InterpolateResponse {
  resolution: number;
  steps: InterpolateStep[];
}

/** Pan/zoom transform from data coordinates to canvas pixels. */
export interface Transform {
  scale: number;
  tx: number;
  ty: number;
}

export interface ViewState {
  activeSpace: SpaceKind;
  transform: Transform;
  selectedId: number | null;
  /** Interpolation endpoints; filled by clicking two points in endpoint mode. */
  endpointA: number | null;
  endpointB: number | null;
  alpha: number;
  /** Latent edits of the free-decode panel, keyed by dimension. */
  latentEdits: Map<number, number>;
}
