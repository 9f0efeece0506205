import {describe, expect, it} from 'vitest';

import {base64ToBytes, decodeSection, sectionResolution, unpackBits} from '../src/bits.js';

describe('bit unpacking', () => {
  it('decodes base64 to bytes', () => {
    // 0b00001001 = 9 -> "CQ==" in base64
    expect(Array.from(base64ToBytes('CQ=='))).toEqual([9]);
  });

  it('unpacks LSB-first within each byte', () => {
    const bits = unpackBits(Uint8Array.from([0b00001001, 0b10000000]), 16);
    expect(Array.from(bits.slice(0, 4))).toEqual([1, 0, 0, 1]);
    expect(bits[15]).toBe(1);
    expect(Array.from(bits.slice(8, 15))).toEqual([0, 0, 0, 0, 0, 0, 0]);
  });

  it('round-trips a section payload', () => {
    // 4x4 section with pixel (x=1, y=2) set: bit index 1*4+2 = 6
    const packed = Uint8Array.from([1 << 6, 0]);
    const b64 = Buffer.from(packed).toString('base64');
    const bits = decodeSection(b64, 4);
    expect(bits[6]).toBe(1);
    expect(bits.reduce((a, b) => a + b, 0)).toBe(1);
  });

  it('derives the grid resolution from byte counts', () => {
    expect(sectionResolution(32)).toBe(16); // 16x16 -> 256 bits
    expect(sectionResolution(128)).toBe(32); // 32x32 -> 1024 bits
    expect(sectionResolution(29)).toBe(15); // 15x15 -> 225 bits in 29 bytes
  });
});
