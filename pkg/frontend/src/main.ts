/** Explorer bootstrap: load both spaces, wire the map and panels together. */

import {ApiClient} from './api.js';
import {base64ToBytes, sectionResolution} from './bits.js';
import {DetailPanel, FreeDecodePanel, InterpolatePanel} from './panels.js';
import {ScatterPlot} from './scatter.js';
import * as state from './state.js';
import {SpaceKind, SpacePoint, ViewState} from './types.js';

function apiBase(): string {
  const fromQuery = new URLSearchParams(location.search).get('api');
  return fromQuery ?? 'http://127.0.0.1:8080';
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const api = new ApiClient(apiBase());
  const banner = el<HTMLDivElement>('error-banner');
  let view: ViewState = state.initialState();
  const pointsBySpace = new Map<SpaceKind, SpacePoint[]>();
  let resolution = 32;
  let endpointMode = false;

  const detail = new DetailPanel(
    el('detail-panel'), el<HTMLCanvasElement>('section-canvas'), () => resolution,
  );
  const interp = new InterpolatePanel(
    api,
    el<HTMLInputElement>('alpha-slider'),
    el<HTMLCanvasElement>('interp-canvas'),
    el('interp-status'),
  );
  const decodePanel = new FreeDecodePanel(
    api,
    el('latent-sliders'),
    el<HTMLCanvasElement>('decode-canvas'),
    el('decode-status'),
    (dim, delta) => {
      view = state.editLatent(view, dim, delta);
      return view.latentEdits;
    },
  );

  function showError(message: string): void {
    banner.hidden = false;
    el('error-message').textContent = message;
  }

  function activePoints(): SpacePoint[] {
    return pointsBySpace.get(view.activeSpace) ?? [];
  }

  const plot = new ScatterPlot(el<HTMLCanvasElement>('map-canvas'), {
    onSelect: (point) => {
      void (async () => {
        if (endpointMode) {
          view = state.pickEndpoint(view, point.id);
          plot.endpointIds = [view.endpointA, view.endpointB];
          plot.draw();
          interp.setEndpoints(view.endpointA, view.endpointB);
          return;
        }
        view = state.selectVessel(view, point.id);
        plot.selectedId = point.id;
        plot.draw();
        try {
          const info = await api.vessel(point.id);
          resolution = sectionResolution(base64ToBytes(info.section).length);
          detail.show(info, point.cluster);
          decodePanel.attach(info.latent);
          el<HTMLButtonElement>('reset-latent').onclick = () => {
            view = state.resetLatent(view);
            decodePanel.reset(info.latent);
          };
        } catch (err) {
          showError(String(err));
        }
      })();
    },
  });

  async function loadSpaces(): Promise<void> {
    banner.hidden = true;
    try {
      const body = await api.spaces();
      for (const space of body.spaces) {
        pointsBySpace.set(space.kind, space.points);
      }
      plot.setPoints(activePoints(), true);
      el('space-label').textContent = view.activeSpace;
    } catch (err) {
      showError(`API unreachable at ${apiBase()}: ${String(err)}`);
    }
  }

  el<HTMLButtonElement>('toggle-space').addEventListener('click', () => {
    view = state.toggleSpace(view);
    plot.selectedId = view.selectedId; // identity survives the toggle
    plot.setPoints(activePoints(), true);
    el('space-label').textContent = view.activeSpace;
  });
  el<HTMLInputElement>('endpoint-mode').addEventListener('change', (e) => {
    endpointMode = (e.target as HTMLInputElement).checked;
  });
  el<HTMLButtonElement>('retry').addEventListener('click', () => void loadSpaces());

  await loadSpaces();
}

void boot();
