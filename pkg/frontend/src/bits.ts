/** Bit-packed voxel payload decoding (matches the VOXL record encoding). */

/** Decode base64 into bytes in both browser (atob) and node (Buffer). */
export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === 'function') {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) {
      out[i] = bin.charCodeAt(i);
    }
    return out;
  }
  const nodeBuffer = (
    globalThis as {Buffer?: {from(s: string, enc: string): Uint8Array}}
  ).Buffer;
  if (!nodeBuffer) throw new Error('no base64 decoder available');
  return Uint8Array.from(nodeBuffer.from(b64, 'base64'));
}

/** Unpack `count` bits stored LSB-first within each byte. */
export function unpackBits(bytes: Uint8Array, count: number): Uint8Array {
  const bits = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    bits[i] = (bytes[i >> 3] >> (i & 7)) & 1;
  }
  return bits;
}

/**
 * Decode a section payload into a row-major [R][R] grid addressed as
 * grid[x][y] with y pointing up (bit index x*R + y).
 */
export function decodeSection(b64: string, resolution: number): Uint8Array {
  return unpackBits(base64ToBytes(b64), resolution * resolution);
}

/** Grid resolution implied by a bit-packed R*R section of `bytes` bytes. */
export function sectionResolution(bytes: number): number {
  return Math.floor(Math.sqrt(bytes * 8));
}

/** Paint a section onto a canvas, y axis up, one filled square per bit. */
export function drawSection(
  canvas: HTMLCanvasElement,
  bits: Uint8Array,
  resolution: number,
  color = '#263238',
): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const cell = Math.min(canvas.width, canvas.height) / resolution;
  ctx.fillStyle = color;
  for (let x = 0; x < resolution; x++) {
    for (let y = 0; y < resolution; y++) {
      if (bits[x * resolution + y]) {
        ctx.fillRect(x * cell, (resolution - 1 - y) * cell, cell + 0.5, cell + 0.5);
      }
    }
  }
}
