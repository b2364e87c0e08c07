/** Domain types mirroring the annotation service's wire format. */

export type Vec3 = [number, number, number];
export type Axis = 0 | 1 | 2;

export type Target = "lungs-left" | "lungs-right" | "lesions";
export const TARGETS: readonly Target[] = ["lungs-left", "lungs-right", "lesions"];

export type Stage =
  | "loaded"
  | "lungs-auto"
  | "lungs-edited"
  | "lesions-auto"
  | "lesions-edited";

export interface GridInfo {
  dims: Vec3;
  spacing: Vec3;
  origin: Vec3;
  direction: number[][];
}

export interface HistoryEntry {
  target: string;
  tool: string;
}

export interface SessionState {
  session_id: string;
  stage: Stage;
  history_length: number;
  history: HistoryEntry[];
  parameters: Record<string, unknown>;
  targets: Record<string, { volume_ml: number }>;
  grid: { native: GridInfo; working: GridInfo | null };
}

export interface OverlayRuns {
  /** Flat [start, length, ...] pairs over the C-order flattened plane. */
  rle: number[];
  count: number;
}

export interface SliceResponse {
  axis: Axis;
  index: number;
  /** [rows, cols] of the plane; rows follow the lower remaining axis. */
  shape: [number, number];
  window: number;
  level: number;
  /** Base64 PNG, 8-bit grayscale. */
  image: string;
  overlays: Record<string, OverlayRuns>;
}

export interface ChangedBounds {
  lo: Vec3;
  hi: Vec3;
}

export type PaintMode = "add" | "remove";
export type MergeMode = "union" | "replace";

export type EditEvent =
  | { target: Target; tool: "brush"; center: Vec3; radius: number; mode: PaintMode }
  | { target: Target; tool: "magnet"; click: Vec3; drag: Vec3; sigma: number }
  | { target: Target; tool: "tps-polyline"; polylines: Vec3[][] }
  | { target: Target; tool: "poly-spline"; splines: Vec3[][]; merge_mode: MergeMode }
  | {
      target: Target;
      tool: "smart-paint";
      stroke: Vec3[];
      tube_radius: number;
      mode: PaintMode;
      k_sigma: number;
      roi_margin: number;
    };

export type ToolId = EditEvent["tool"];

export interface EditResponse extends SessionState {
  target: Target;
  changed: ChangedBounds | null;
}

export interface CreateResponse {
  session_id: string;
  stage: Stage;
  dims: Vec3;
  spacing: Vec3;
}

/** Config override sections accepted by the stage-run endpoints. */
export interface Overrides {
  lung?: Partial<LevelSetOverride>;
  lesion?: Partial<LevelSetOverride>;
  model?: Record<string, number>;
  resample?: { coarse_mm?: number; iso_mm?: number };
  shape_models?: { left?: string | null; right?: string | null };
}

export interface LevelSetOverride {
  t_low: number;
  t_high: number;
  curvature_weight: number;
  max_iterations: number;
  convergence_tol: number;
  step_size: number;
}
