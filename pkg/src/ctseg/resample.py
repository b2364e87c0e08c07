"""Reorientation to RAI axes and grid resampling (anti-aliased / trilinear)."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import OrientationError
from .grid import DistanceMap, Grid, Mask, Volume

AXIS_TOL = 1e-3


def _signed_permutation(direction: np.ndarray):
    """Decompose an axis-aligned direction matrix into (axis order, signs).

    Returns, for each world axis w, the index axis feeding it and the sign.
    Raises OrientationError for oblique matrices (anything not within 1e-3 of
    a signed permutation).
    """
    perm = [-1, -1, -1]
    signs = [0, 0, 0]
    for w in range(3):
        row = direction[w]
        for a in range(3):
            if abs(abs(row[a]) - 1.0) <= AXIS_TOL:
                perm[w] = a
                signs[w] = 1 if row[a] > 0 else -1
            elif abs(row[a]) > AXIS_TOL:
                raise OrientationError(
                    f"oblique direction matrix (entry {row[a]:.6f} at world axis {w})"
                )
    if sorted(perm) != [0, 1, 2]:
        raise OrientationError("direction matrix is not a signed permutation")
    return perm, signs


def reorient_rai(obj):
    """Permute/flip voxels so the direction matrix becomes identity (RAI).

    World coordinates of every voxel are preserved; only the in-memory axis
    order changes. Oblique inputs are rejected.
    """
    grid = obj.grid
    d = grid.direction_matrix
    if grid.is_identity_direction(tol=AXIS_TOL) and grid.is_identity_direction(tol=1e-9):
        return type(obj)(grid, np.array(obj.voxels))

    perm, signs = _signed_permutation(d)
    vox = np.transpose(obj.voxels, axes=perm)
    corner = [0, 0, 0]  # old index of the voxel that becomes new (0,0,0)
    for w in range(3):
        if signs[w] < 0:
            vox = np.flip(vox, axis=w)
            corner[perm[w]] = grid.dims[perm[w]] - 1
    new_origin = grid.index_to_world(corner)
    new_grid = Grid(
        tuple(grid.dims[a] for a in perm),
        tuple(grid.spacing[a] for a in perm),
        tuple(new_origin),
    )
    return type(obj)(new_grid, np.ascontiguousarray(vox))


def _output_grid(grid: Grid, target: tuple[float, float, float]) -> Grid:
    dims = tuple(
        max(1, int(round(grid.dims[a] * grid.spacing[a] / target[a]))) for a in range(3)
    )
    # keep the outer voxel edges in place: shift origin by half the spacing change
    shift = np.array([(target[a] - grid.spacing[a]) * 0.5 for a in range(3)])
    origin = np.asarray(grid.origin) + grid.direction_matrix @ shift
    return Grid(dims, target, tuple(origin), grid.direction)


def _tent_matrix(n_in: int, n_out: int, s_in: float, s_out: float) -> np.ndarray:
    """Row-stochastic tent-kernel weights mapping n_in samples to n_out."""
    ratio = s_out / s_in
    radius = max(ratio, 1.0)
    centers = (np.arange(n_out) + 0.5) * ratio - 0.5
    j = np.arange(n_in)
    w = 1.0 - np.abs(j[None, :] - centers[:, None]) / radius
    np.clip(w, 0.0, None, out=w)
    w /= w.sum(axis=1, keepdims=True)
    return w


def resample(obj, target_spacing, method: str = "iso"):
    """Resample onto a new grid with the requested spacing.

    method "down": separable triangle (tent) kernel, anti-aliased - meant for
    going to coarser spacing. method "iso": trilinear interpolation. Masks are
    resampled nearest-neighbour regardless of method. Output dims are
    round(dims * spacing / target) per axis (min 1) and the outer volume
    extent is preserved.
    """
    if np.isscalar(target_spacing):
        target_spacing = (float(target_spacing),) * 3
    target = tuple(float(t) for t in target_spacing)
    grid = obj.grid
    out_grid = _output_grid(grid, target)

    if isinstance(obj, Mask):
        coords = [
            np.clip(np.round((np.arange(out_grid.dims[a]) + 0.5) * target[a] / grid.spacing[a] - 0.5), 0, grid.dims[a] - 1).astype(np.intp)
            for a in range(3)
        ]
        vox = obj.voxels[np.ix_(*coords)]
        return Mask(out_grid, np.ascontiguousarray(vox))

    if method == "down":
        data = np.asarray(obj.voxels, dtype=np.float64)
        for a in range(3):
            w = _tent_matrix(grid.dims[a], out_grid.dims[a], grid.spacing[a], target[a])
            data = np.moveaxis(np.tensordot(w, np.moveaxis(data, a, 0), axes=(1, 0)), 0, a)
    elif method == "iso":
        axes = [
            (np.arange(out_grid.dims[a]) + 0.5) * target[a] / grid.spacing[a] - 0.5
            for a in range(3)
        ]
        ci, cj, ck = np.meshgrid(*axes, indexing="ij")
        data = ndimage.map_coordinates(
            np.asarray(obj.voxels, dtype=np.float64),
            np.stack([ci, cj, ck]),
            order=1,
            mode="nearest",
        )
    else:
        raise ValueError(f"unknown resample method {method!r}")

    return type(obj)(out_grid, data.astype(np.float32))


def resample_mask_to_grid(mask: Mask, grid: Grid) -> Mask:
    """Nearest-neighbour transfer of a mask onto an arbitrary grid."""
    ii, jj, kk = np.meshgrid(*(np.arange(n) for n in grid.dims), indexing="ij")
    idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)
    world = grid.index_to_world(idx)
    src = np.round(mask.grid.world_to_index(world)).astype(np.intp)
    ok = np.all((src >= 0) & (src < np.array(mask.grid.dims)), axis=1)
    out = np.zeros(len(src), dtype=np.uint8)
    s = src[ok]
    out[ok] = mask.voxels[s[:, 0], s[:, 1], s[:, 2]]
    return Mask(grid, out.reshape(grid.dims))
