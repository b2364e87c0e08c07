/** Client-side view state and the stage guard.
 *
 * The state is plain data updated through pure functions so the guard
 * logic is testable without a DOM. Segmentation truth never lives here;
 * masks come from the service on every refresh.
 */

import type { Axis, GridInfo, SessionState, Stage, Target, ToolId, Vec3 } from "./types.js";
import { TARGETS } from "./types.js";
import type { ToolParams } from "./tools.js";
import { DEFAULT_TOOL_PARAMS } from "./tools.js";

export const STAGES: readonly Stage[] = [
  "loaded",
  "lungs-auto",
  "lungs-edited",
  "lesions-auto",
  "lesions-edited",
];

export function stageRank(stage: Stage): number {
  const rank = STAGES.indexOf(stage);
  if (rank < 0) throw new Error(`unknown stage ${stage}`);
  return rank;
}

export function requiredStage(target: Target): Stage {
  return target === "lesions" ? "lesions-auto" : "lungs-auto";
}

/** Gesture gate: editing a target before its automatic stage ran must not
 * reach the service at all. */
export function canEditTarget(stage: Stage, target: Target): boolean {
  return stageRank(stage) >= stageRank(requiredStage(target));
}

export interface ViewState {
  sessionId: string;
  stage: Stage;
  /** Slice index per axis on the working grid. */
  indices: Vec3;
  windowHu: number;
  levelHu: number;
  tool: ToolId;
  toolParams: ToolParams;
  target: Target;
  overlayVisible: Record<Target, boolean>;
  /** Two targets rendered in the green/red/yellow comparison scheme. */
  comparePair: [Target, Target] | null;
  /** World-space trail of the gesture being drawn. */
  pendingStroke: Vec3[];
  crosshair: Vec3 | null;
}

export const DEFAULT_WINDOW_HU = 1500;
export const DEFAULT_LEVEL_HU = -600;

export function initialViewState(state: SessionState, grid: GridInfo): ViewState {
  return {
    sessionId: state.session_id,
    stage: state.stage,
    indices: [
      Math.floor(grid.dims[0] / 2),
      Math.floor(grid.dims[1] / 2),
      Math.floor(grid.dims[2] / 2),
    ],
    windowHu: DEFAULT_WINDOW_HU,
    levelHu: DEFAULT_LEVEL_HU,
    tool: "brush",
    toolParams: { ...DEFAULT_TOOL_PARAMS },
    target: "lungs-left",
    overlayVisible: Object.fromEntries(TARGETS.map((t) => [t, true])) as Record<Target, boolean>,
    comparePair: null,
    pendingStroke: [],
    crosshair: null,
  };
}

export function setSliceIndex(vs: ViewState, grid: GridInfo, axis: Axis, index: number): ViewState {
  const last = grid.dims[axis] - 1;
  const clamped = Math.min(last, Math.max(0, Math.round(index)));
  const indices: Vec3 = [...vs.indices];
  indices[axis] = clamped;
  return { ...vs, indices };
}

export function setWindowLevel(vs: ViewState, windowHu: number, levelHu: number): ViewState {
  if (!(windowHu > 0)) throw new Error("window width must be positive");
  return { ...vs, windowHu, levelHu };
}

export function toggleOverlay(vs: ViewState, target: Target): ViewState {
  return {
    ...vs,
    overlayVisible: { ...vs.overlayVisible, [target]: !vs.overlayVisible[target] },
  };
}

export function beginStroke(vs: ViewState, world: Vec3): ViewState {
  return { ...vs, pendingStroke: [world] };
}

export function extendStroke(vs: ViewState, world: Vec3): ViewState {
  if (vs.pendingStroke.length === 0) return vs;
  return { ...vs, pendingStroke: [...vs.pendingStroke, world] };
}

/** Pop the finished gesture's trail off the state. */
export function takeStroke(vs: ViewState): [Vec3[], ViewState] {
  return [vs.pendingStroke, { ...vs, pendingStroke: [] }];
}

export function setCrosshair(vs: ViewState, grid: GridInfo, world: Vec3): ViewState {
  let next: ViewState = { ...vs, crosshair: world };
  for (const axis of [0, 1, 2] as const) {
    const idx = (world[axis] - grid.origin[axis]) / grid.spacing[axis];
    next = setSliceIndex(next, grid, axis, idx);
  }
  return next;
}
