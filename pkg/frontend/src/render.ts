/** Canvas compositing for one orthogonal view: grayscale base slice,
 * run-length overlays at fixed colors, pending stroke, crosshair.
 *
 * overlayPlane is pure pixel math over typed arrays; only drawView
 * touches browser APIs.
 */

import type { ViewTransform } from "./geometry.js";
import { worldToView } from "./geometry.js";
import { consensusColor, cssColor, TARGET_COLORS } from "./palette.js";
import { consensusCodes, decodeOverlay } from "./rle.js";
import type { Rgba } from "./rle.js";
import type { SliceResponse, Target, Vec3 } from "./types.js";

export interface RenderOptions {
  visible: Record<Target, boolean>;
  comparePair: [Target, Target] | null;
  stroke: Vec3[];
  crosshair: Vec3 | null;
}

function writePixel(plane: Uint8ClampedArray, i: number, color: Rgba): void {
  const o = i * 4;
  if (plane[o + 3] === 0) {
    plane[o] = color[0];
    plane[o + 1] = color[1];
    plane[o + 2] = color[2];
    plane[o + 3] = color[3];
  } else {
    // overlapping targets share the pixel with equal weight
    plane[o] = (plane[o] + color[0]) / 2;
    plane[o + 1] = (plane[o + 1] + color[1]) / 2;
    plane[o + 2] = (plane[o + 2] + color[2]) / 2;
    plane[o + 3] = Math.max(plane[o + 3], color[3]);
  }
}

/** Straight (unpremultiplied) RGBA pixels of the overlay plane: per-target
 * colors, or the green/red/yellow coding when a comparison pair is set. */
export function overlayPlane(
  slice: SliceResponse,
  options: RenderOptions,
): Uint8ClampedArray<ArrayBuffer> {
  const [rows, cols] = slice.shape;
  const plane = new Uint8ClampedArray(rows * cols * 4);
  if (options.comparePair) {
    const [a, b] = options.comparePair;
    const first = slice.overlays[a];
    const second = slice.overlays[b];
    if (!first || !second) return plane;
    const codes = consensusCodes(
      decodeOverlay(first, rows, cols),
      decodeOverlay(second, rows, cols),
    );
    for (let i = 0; i < codes.length; i++) {
      const color = consensusColor(codes[i]);
      if (color) writePixel(plane, i, color);
    }
    return plane;
  }
  for (const target of Object.keys(slice.overlays) as Target[]) {
    if (!options.visible[target]) continue;
    const color = TARGET_COLORS[target];
    if (!color) continue;
    const mask = decodeOverlay(slice.overlays[target], rows, cols);
    for (let i = 0; i < mask.length; i++) {
      if (mask[i]) writePixel(plane, i, color);
    }
  }
  return plane;
}

async function decodePng(base64: string): Promise<ImageBitmap> {
  const binary = atob(base64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < bytes.length; i++) bytes[i] = binary.charCodeAt(i);
  return createImageBitmap(new Blob([bytes], { type: "image/png" }));
}

export async function drawView(
  canvas: HTMLCanvasElement,
  slice: SliceResponse,
  t: ViewTransform,
  options: RenderOptions,
): Promise<void> {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");
  const [rows, cols] = slice.shape;
  ctx.fillStyle = "#101014";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = false;

  const base = await decodePng(slice.image);
  ctx.drawImage(base, t.panX, t.panY, cols * t.scale, rows * t.scale);

  const overlay = overlayPlane(slice, options);
  let hasAny = false;
  for (let i = 3; i < overlay.length; i += 4) {
    if (overlay[i] > 0) {
      hasAny = true;
      break;
    }
  }
  if (hasAny) {
    const off = new OffscreenCanvas(cols, rows);
    const offCtx = off.getContext("2d");
    if (offCtx) {
      offCtx.putImageData(new ImageData(overlay, cols, rows), 0, 0);
      ctx.drawImage(off, t.panX, t.panY, cols * t.scale, rows * t.scale);
    }
  }

  if (options.stroke.length > 0) {
    ctx.strokeStyle = "rgba(255, 255, 255, 0.9)";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    for (let i = 0; i < options.stroke.length; i++) {
      const p = worldToView(t, options.stroke[i]);
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    }
    ctx.stroke();
  }

  if (options.crosshair) {
    const p = worldToView(t, options.crosshair);
    ctx.strokeStyle = cssColor([255, 240, 120, 210]);
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(p.x, t.panY);
    ctx.lineTo(p.x, t.panY + rows * t.scale);
    ctx.moveTo(t.panX, p.y);
    ctx.lineTo(t.panX + cols * t.scale, p.y);
    ctx.stroke();
  }
}
