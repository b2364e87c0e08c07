/** Screen, voxel, and world (mm) coordinate mapping for the three views.
 *
 * The working grid is axis-aligned (identity direction after the service
 * reorients to RAI), so world = origin + index * spacing per component.
 * A slice image's rows follow the lower remaining axis and its columns
 * the higher one, matching the service's plane extraction and the C-order
 * run-length flattening of overlays.
 */

import type { Axis, GridInfo, Vec3 } from "./types.js";

export function isIdentityDirection(grid: GridInfo, tol = 1e-3): boolean {
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      const want = r === c ? 1 : 0;
      if (Math.abs((grid.direction[r]?.[c] ?? NaN) - want) > tol) return false;
    }
  }
  return true;
}

export function assertViewableGrid(grid: GridInfo): void {
  if (!isIdentityDirection(grid)) {
    throw new Error("viewer requires an axis-aligned working grid");
  }
}

export interface PlaneAxes {
  row: Axis;
  col: Axis;
}

export function planeAxes(axis: Axis): PlaneAxes {
  switch (axis) {
    case 0:
      return { row: 1, col: 2 };
    case 1:
      return { row: 0, col: 2 };
    case 2:
      return { row: 0, col: 1 };
  }
}

/** Continuous voxel index of a world point; centers sit on integers. */
export function worldToVoxel(grid: GridInfo, world: Vec3): Vec3 {
  return [
    (world[0] - grid.origin[0]) / grid.spacing[0],
    (world[1] - grid.origin[1]) / grid.spacing[1],
    (world[2] - grid.origin[2]) / grid.spacing[2],
  ];
}

export function voxelToWorld(grid: GridInfo, voxel: Vec3): Vec3 {
  return [
    grid.origin[0] + voxel[0] * grid.spacing[0],
    grid.origin[1] + voxel[1] * grid.spacing[1],
    grid.origin[2] + voxel[2] * grid.spacing[2],
  ];
}

export function clampIndex(grid: GridInfo, axis: Axis, index: number): number {
  const last = grid.dims[axis] - 1;
  return Math.min(last, Math.max(0, Math.round(index)));
}

/** One orthogonal view: its fixed axis plus the canvas placement of the
 * slice image. Image pixel (r, c) covers the screen square of size scale
 * at (panX + c * scale, panY + r * scale). */
export interface ViewTransform {
  axis: Axis;
  grid: GridInfo;
  scale: number;
  panX: number;
  panY: number;
}

export interface ViewPoint {
  /** Slice index along the view's fixed axis. */
  index: number;
  x: number;
  y: number;
}

/** Project a world point into a view: rounded slice index plus the
 * continuous canvas position of its in-plane components. */
export function worldToView(t: ViewTransform, world: Vec3): ViewPoint {
  const v = worldToVoxel(t.grid, world);
  const { row, col } = planeAxes(t.axis);
  return {
    index: clampIndex(t.grid, t.axis, v[t.axis]),
    x: t.panX + (v[col] + 0.5) * t.scale,
    y: t.panY + (v[row] + 0.5) * t.scale,
  };
}

/** Invert worldToView. Exact in-plane; the fixed axis is quantized to the
 * slice index, so the round trip moves a point at most half a voxel. */
export function viewToWorld(t: ViewTransform, p: ViewPoint): Vec3 {
  const { row, col } = planeAxes(t.axis);
  const v: Vec3 = [0, 0, 0];
  v[t.axis] = p.index;
  v[row] = (p.y - t.panY) / t.scale - 0.5;
  v[col] = (p.x - t.panX) / t.scale - 0.5;
  return voxelToWorld(t.grid, v);
}

/** Scale that fits the whole plane inside a canvas, square pixels. */
export function fitScale(grid: GridInfo, axis: Axis, width: number, height: number): number {
  const { row, col } = planeAxes(axis);
  return Math.min(width / grid.dims[col], height / grid.dims[row]);
}
