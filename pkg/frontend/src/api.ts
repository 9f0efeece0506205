/** Typed API client with stale-response discarding and debounced posts.
 *
 * Every mutating panel issues requests through `LatestGate`, which tags each
 * call with a sequence number and drops responses that arrive after a newer
 * request was issued - slider scrubbing never paints stale previews.
 */

import {
  DecodeResponse,
  InterpolateResponse,
  SpacesResponse,
  VesselDetail,
} from './types.js';

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const message =
      typeof body === 'object' && body !== null && 'error' in body
        ? String((body as {error: unknown}).error)
        : `HTTP ${resp.status}`;
    throw new ApiError(resp.status, message);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path;
  }

  async spaces(): Promise<SpacesResponse> {
    return asJson(await fetch(this.url('/api/spaces')));
  }

  async vessel(id: number): Promise<VesselDetail> {
    return asJson(await fetch(this.url(`/api/vessel/${id}`)));
  }

  async decode(z: number[], threshold = 0.5): Promise<DecodeResponse> {
    return asJson(
      await fetch(this.url('/api/decode'), {
        method: 'POST',
        headers: {'content-type': 'application/json'},
        body: JSON.stringify({z, threshold}),
      }),
    );
  }

  async interpolate(
    idA: number,
    idB: number,
    steps: number,
  ): Promise<InterpolateResponse> {
    return asJson(
      await fetch(this.url('/api/interpolate'), {
        method: 'POST',
        headers: {'content-type': 'application/json'},
        body: JSON.stringify({id_a: idA, id_b: idB, steps}),
      }),
    );
  }
}

/** Runs async tasks; resolves only the latest issue, discarding the rest. */
export class LatestGate {
  private seq = 0;

  async run<T>(task: () => Promise<T>): Promise<T | null> {
    const ticket = ++this.seq;
    const result = await task();
    return ticket === this.seq ? result : null;
  }
}

/** Trailing-edge debounce; at most one call per quiet window. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
  timers: {set: typeof setTimeout; clear: typeof clearTimeout} = {
    set: setTimeout,
    clear: clearTimeout,
  },
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (handle !== null) timers.clear(handle);
    handle = timers.set(() => {
      handle = null;
      fn(...args);
    }, waitMs);
  };
}
