/** Detail, interpolation, and free-decode panels (plain DOM, no framework). */

import {ApiClient, LatestGate, debounce} from './api.js';
import {decodeSection, drawSection} from './bits.js';
import {editedLatent} from './state.js';
import {InterpolateResponse, VesselDetail} from './types.js';

const PARAM_ORDER = ['height', 'base_width', 'top_width', 'ctrl_r', 'ctrl_h'] as const;

export class DetailPanel {
  private current: VesselDetail | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly sectionCanvas: HTMLCanvasElement,
    private readonly resolution: () => number,
  ) {}

  get vessel(): VesselDetail | null {
    return this.current;
  }

  show(detail: VesselDetail, cluster: number): void {
    this.current = detail;
    const rows = PARAM_ORDER.map(
      (name) => `<tr><td>${name}</td><td>${detail.params[name].toFixed(4)}</td></tr>`,
    ).join('');
    this.root.querySelector('.detail-body')!.innerHTML = `
      <p>vessel <strong>#${detail.id}</strong> - cluster ${cluster} -
        ${detail.occupied_count} voxels</p>
      <table>${rows}</table>`;
    drawSection(
      this.sectionCanvas,
      decodeSection(detail.section, this.resolution()),
      this.resolution(),
    );
  }

  clear(): void {
    this.current = null;
    this.root.querySelector('.detail-body')!.innerHTML = '<p>click a point</p>';
  }
}

export class InterpolatePanel {
  private steps: InterpolateResponse | null = null;
  private readonly gate = new LatestGate();
  private readonly request: (a: number, b: number) => void;

  constructor(
    private readonly api: ApiClient,
    slider: HTMLInputElement,
    private readonly canvas: HTMLCanvasElement,
    private readonly status: HTMLElement,
    stepCount = 16,
    debounceMs = 150,
  ) {
    // the slider drag issues at most one in-flight request per quiet window
    this.request = debounce((a: number, b: number) => {
      void this.gate
        .run(() => this.api.interpolate(a, b, stepCount))
        .then((resp) => {
          if (resp) {
            this.steps = resp;
            this.render(Number(slider.value));
          }
        })
        .catch((err) => this.fail(err));
    }, debounceMs);
    slider.addEventListener('input', () => this.render(Number(slider.value)));
  }

  setEndpoints(idA: number | null, idB: number | null): void {
    this.steps = null;
    if (idA === null || idB === null) {
      this.status.textContent = 'pick two endpoints on the map';
      return;
    }
    this.status.textContent = `interpolating #${idA} -> #${idB}`;
    this.request(idA, idB);
  }

  /** Show the decoded section closest to the slider's alpha. */
  render(alpha: number): void {
    if (!this.steps) return;
    const steps = this.steps.steps;
    let best = 0;
    for (let i = 1; i < steps.length; i++) {
      if (Math.abs(steps[i].alpha - alpha) < Math.abs(steps[best].alpha - alpha)) {
        best = i;
      }
    }
    const step = steps[best];
    drawSection(
      this.canvas,
      decodeSection(step.section, this.steps.resolution),
      this.steps.resolution,
    );
    this.status.textContent =
      `alpha ${step.alpha.toFixed(2)} - ${step.occupied_count} voxels`;
  }

  private fail(err: unknown): void {
    this.status.textContent = `interpolation failed: ${String(err)}`;
  }
}

export class FreeDecodePanel {
  private readonly gate = new LatestGate();
  private readonly post: (z: number[]) => void;
  /** Dimensions exposed as sliders; enough to steer without clutter. */
  readonly dims = [0, 1, 2, 3, 4, 5, 6, 7];

  constructor(
    private readonly api: ApiClient,
    private readonly slidersRoot: HTMLElement,
    private readonly canvas: HTMLCanvasElement,
    private readonly status: HTMLElement,
    private readonly onEdit: (dim: number, delta: number) => Map<number, number>,
    debounceMs = 150,
  ) {
    this.post = debounce((z: number[]) => {
      void this.gate
        .run(() => this.api.decode(z))
        .then((resp) => {
          if (resp) {
            drawSection(
              this.canvas, decodeSection(resp.section, resp.resolution),
              resp.resolution,
            );
            this.status.textContent = `${resp.occupied_count} voxels`;
          }
        })
        .catch((err) => {
          this.status.textContent = `decode failed: ${String(err)}`;
        });
    }, debounceMs);
  }

  attach(baseLatent: number[]): void {
    this.slidersRoot.innerHTML = '';
    for (const dim of this.dims) {
      const row = document.createElement('label');
      row.className = 'latent-row';
      row.textContent = `z[${dim}]`;
      const slider = document.createElement('input');
      slider.type = 'range';
      slider.min = '-3';
      slider.max = '3';
      slider.step = '0.1';
      slider.value = '0';
      slider.dataset.dim = String(dim);
      slider.addEventListener('input', () => {
        const edits = this.onEdit(dim, Number(slider.value));
        this.post(editedLatent(baseLatent, edits));
      });
      row.appendChild(slider);
      this.slidersRoot.appendChild(row);
    }
    this.post(baseLatent); // zero perturbation: the vessel's reconstruction
  }

  reset(baseLatent: number[]): void {
    for (const slider of this.slidersRoot.querySelectorAll('input')) {
      (slider as HTMLInputElement).value = '0';
    }
    this.post(baseLatent);
  }
}
