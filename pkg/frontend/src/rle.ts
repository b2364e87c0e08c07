/** Run-length overlay decoding.
 *
 * The service sends each overlay as [start, length, ...] pairs over the
 * C-order flattened slice plane, which is exactly the pixel order of an
 * ImageData buffer sized cols x rows.
 */

import type { OverlayRuns } from "./types.js";

export type Rgba = [number, number, number, number];

export function decodeRuns(runs: number[], length: number): Uint8Array {
  if (runs.length % 2 !== 0) {
    throw new RangeError(`run list must hold (start, length) pairs, got ${runs.length} values`);
  }
  const out = new Uint8Array(length);
  for (let k = 0; k < runs.length; k += 2) {
    const start = runs[k];
    const count = runs[k + 1];
    if (!Number.isInteger(start) || !Number.isInteger(count)) {
      throw new RangeError(`run ${k / 2} is not integral`);
    }
    if (count <= 0 || start < 0 || start + count > length) {
      throw new RangeError(`run ${k / 2} [${start}, ${start + count}) outside plane of ${length}`);
    }
    out.fill(1, start, start + count);
  }
  return out;
}

/** Decode one overlay sidecar, cross-checking the service's pixel count. */
export function decodeOverlay(overlay: OverlayRuns, rows: number, cols: number): Uint8Array {
  const mask = decodeRuns(overlay.rle, rows * cols);
  let total = 0;
  for (let i = 0; i < mask.length; i++) total += mask[i];
  if (total !== overlay.count) {
    throw new RangeError(`overlay count ${overlay.count} does not match runs total ${total}`);
  }
  return mask;
}

/** Per-pixel membership codes for the two-overlay comparison mode:
 * 0 neither, 1 first only, 2 second only, 3 both. */
export function consensusCodes(first: Uint8Array, second: Uint8Array): Uint8Array {
  if (first.length !== second.length) {
    throw new RangeError(`plane sizes differ: ${first.length} vs ${second.length}`);
  }
  const out = new Uint8Array(first.length);
  for (let i = 0; i < out.length; i++) {
    out[i] = (first[i] ? 1 : 0) | (second[i] ? 2 : 0);
  }
  return out;
}
