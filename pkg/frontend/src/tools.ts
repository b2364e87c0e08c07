/** Gesture to edit-event mapping.
 *
 * Every committed gesture becomes exactly one event in the service's edit
 * script schema, with all positions in world millimetres. The service and
 * the command-line script runner parse the same JSON, so a gesture posted
 * here and the same event in a script file produce identical masks.
 */

import type { EditEvent, MergeMode, PaintMode, Target, ToolId, Vec3 } from "./types.js";

export interface ToolParams {
  /** Brush sphere radius, mm. */
  radius: number;
  /** Magnet Gaussian falloff, mm. */
  sigma: number;
  /** Smart-paint tube radius, mm. */
  tubeRadius: number;
  /** Smart-paint intensity acceptance width, standard deviations. */
  kSigma: number;
  /** Smart-paint locality bound around the stroke, mm. */
  roiMargin: number;
  mode: PaintMode;
  mergeMode: MergeMode;
}

export const DEFAULT_TOOL_PARAMS: ToolParams = {
  radius: 5,
  sigma: 4,
  tubeRadius: 2.5,
  kSigma: 2.5,
  roiMargin: 10,
  mode: "add",
  mergeMode: "union",
};

export class GestureError extends Error {}

const MIN_POINTS: Record<ToolId, number> = {
  brush: 1,
  magnet: 2,
  "tps-polyline": 2,
  "poly-spline": 3,
  "smart-paint": 2,
};

export function minimumPoints(tool: ToolId): number {
  return MIN_POINTS[tool];
}

/** Convert one finished gesture (its world-space point trail) into the
 * event the service applies. The brush keeps only the final point; the
 * magnet uses first point as the grabbed spot and the trail end as the
 * drag destination. */
export function gestureToEvent(
  tool: ToolId,
  target: Target,
  points: Vec3[],
  params: ToolParams,
): EditEvent {
  if (points.length < MIN_POINTS[tool]) {
    throw new GestureError(`${tool} needs at least ${MIN_POINTS[tool]} point(s), got ${points.length}`);
  }
  switch (tool) {
    case "brush":
      return {
        target,
        tool,
        center: points[points.length - 1],
        radius: params.radius,
        mode: params.mode,
      };
    case "magnet": {
      const click = points[0];
      const end = points[points.length - 1];
      const drag: Vec3 = [end[0] - click[0], end[1] - click[1], end[2] - click[2]];
      return { target, tool, click, drag, sigma: params.sigma };
    }
    case "tps-polyline":
      return { target, tool, polylines: [points.slice()] };
    case "poly-spline":
      return { target, tool, splines: [points.slice()], merge_mode: params.mergeMode };
    case "smart-paint":
      return {
        target,
        tool,
        stroke: points.slice(),
        tube_radius: params.tubeRadius,
        mode: params.mode,
        k_sigma: params.kSigma,
        roi_margin: params.roiMargin,
      };
  }
}
