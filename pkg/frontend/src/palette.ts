/** Fixed overlay palette. Lungs get two hues, lesions a third; the
 * two-overlay comparison mode uses green (first only), red (second only),
 * and yellow (agreement). */

import type { Rgba } from "./rle.js";
import type { Target } from "./types.js";

export const OVERLAY_ALPHA = 110;

export const TARGET_COLORS: Record<Target, Rgba> = {
  "lungs-left": [86, 144, 255, OVERLAY_ALPHA],
  "lungs-right": [64, 192, 160, OVERLAY_ALPHA],
  lesions: [244, 148, 48, OVERLAY_ALPHA],
};

export const CONSENSUS_COLORS: { firstOnly: Rgba; secondOnly: Rgba; both: Rgba } = {
  firstOnly: [64, 200, 80, OVERLAY_ALPHA],
  secondOnly: [224, 64, 64, OVERLAY_ALPHA],
  both: [232, 216, 56, OVERLAY_ALPHA],
};

export function consensusColor(code: number): Rgba | null {
  switch (code) {
    case 1:
      return CONSENSUS_COLORS.firstOnly;
    case 2:
      return CONSENSUS_COLORS.secondOnly;
    case 3:
      return CONSENSUS_COLORS.both;
    default:
      return null;
  }
}

export function cssColor([r, g, b, a]: Rgba): string {
  return `rgba(${r}, ${g}, ${b}, ${(a / 255).toFixed(3)})`;
}
