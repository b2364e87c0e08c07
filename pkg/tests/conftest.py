"""Shared helpers: analytic phantoms and independent brute-force oracles.

Oracles deliberately avoid the library code paths they check (plain numpy,
no scipy), so implementation and test stay two separate routes.
"""

from __future__ import annotations

import numpy as np

from ctseg.grid import Grid, Mask, Volume


def make_grid(dims, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Grid:
    if np.isscalar(dims):
        dims = (dims,) * 3
    if np.isscalar(spacing):
        spacing = (float(spacing),) * 3
    return Grid(tuple(int(d) for d in dims), tuple(spacing), tuple(origin))


def voxel_centers_mm(grid: Grid):
    """World coordinates of all voxel centres, shape dims + (3,)."""
    axes = [np.arange(n) for n in grid.dims]
    ii, jj, kk = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([ii, jj, kk], axis=-1).astype(float)
    return grid.index_to_world(idx)


def ball_mask(grid: Grid, center_mm, radius_mm) -> Mask:
    c = voxel_centers_mm(grid)
    d2 = ((c - np.asarray(center_mm, dtype=float)) ** 2).sum(axis=-1)
    return Mask(grid, d2 <= radius_mm**2)


def ellipsoid_mask(grid: Grid, center_mm, radii_mm) -> Mask:
    c = voxel_centers_mm(grid)
    q = ((c - np.asarray(center_mm, dtype=float)) / np.asarray(radii_mm, dtype=float)) ** 2
    return Mask(grid, q.sum(axis=-1) <= 1.0)


def random_blob_mask(grid: Grid, rng: np.random.Generator, n_balls=3, r_range=(2.0, 6.0)) -> Mask:
    """Union of a few random balls; may be empty for tiny grids."""
    extent = np.array(grid.dims) * np.array(grid.spacing)
    total = np.zeros(grid.dims, dtype=bool)
    c = voxel_centers_mm(grid)
    for _ in range(n_balls):
        center = np.asarray(grid.origin) + rng.uniform(0.2, 0.8, 3) * extent
        r = rng.uniform(*r_range)
        total |= ((c - center) ** 2).sum(axis=-1) <= r**2
    return Mask(grid, total)


def brute_force_signed_distance(mask: Mask, cap_mm: float = 30.0) -> np.ndarray:
    """All-pairs signed EDT oracle (float32, chunked plain numpy).

    Same definition as the library: centre-to-opposite-centre distance minus
    half the smallest spacing, signed, clamped.
    """
    m = mask.bool_voxels
    if m.all():
        return np.full(mask.dims, np.float32(cap_mm))
    if not m.any():
        return np.full(mask.dims, np.float32(-cap_mm))
    spacing = np.asarray(mask.spacing)
    half = 0.5 * float(spacing.min())
    coords = np.argwhere(np.ones(mask.dims, dtype=bool)).astype(float) * spacing
    inside_pts = np.argwhere(m).astype(float) * spacing
    outside_pts = np.argwhere(~m).astype(float) * spacing
    flat_inside = m.reshape(-1)

    def min_dist(points, targets):
        out = np.empty(len(points))
        step = 2048
        for s in range(0, len(points), step):
            chunk = points[s : s + step]
            d2 = ((chunk[:, None, :] - targets[None, :, :]) ** 2).sum(axis=-1)
            out[s : s + step] = np.sqrt(d2.min(axis=1))
        return out

    phi = np.empty(len(coords))
    phi[flat_inside] = min_dist(coords[flat_inside], outside_pts) - half
    phi[~flat_inside] = half - min_dist(coords[~flat_inside], inside_pts)
    return np.clip(phi, -cap_mm, cap_mm).astype(np.float32).reshape(mask.dims)


def flood_fill_6(in_range: np.ndarray, seed: np.ndarray) -> np.ndarray:
    """6-connected flood fill of ``in_range`` from ``seed`` (bool arrays)."""
    region = seed & in_range
    while True:
        grown = region.copy()
        grown[1:, :, :] |= region[:-1, :, :]
        grown[:-1, :, :] |= region[1:, :, :]
        grown[:, 1:, :] |= region[:, :-1, :]
        grown[:, :-1, :] |= region[:, 1:, :]
        grown[:, :, 1:] |= region[:, :, :-1]
        grown[:, :, :-1] |= region[:, :, 1:]
        grown &= in_range
        if (grown == region).all():
            return region
        region = grown


def dice_of(a: np.ndarray, b: np.ndarray) -> float:
    a = a.astype(bool)
    b = b.astype(bool)
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return 2.0 * float((a & b).sum()) / float(denom)


def ramp_volume(grid: Grid, coeffs=(0.7, -0.3, 0.2), offset=-500.0) -> Volume:
    c = voxel_centers_mm(grid)
    vals = c @ np.asarray(coeffs, dtype=float) + offset
    return Volume(grid, vals.astype(np.float32))


def two_lung_phantom(n=64, spacing=2.0):
    """Two -800 HU lung ellipsoids in a +40 HU body inside -1000 HU air.

    Returns (volume, left mask, right mask); the analytic ellipsoid masks are
    the ground truth for segmentation scores.
    """
    half = n * spacing / 2.0
    g = make_grid(n, spacing=spacing, origin=(-(half - spacing / 2.0),) * 3)
    c = voxel_centers_mm(g)

    def ell(center, radii):
        q = ((c - np.asarray(center, float)) / np.asarray(radii, float)) ** 2
        return q.sum(axis=-1) <= 1.0

    body = ell((0.0, 0.0, 0.0), (58.0, 52.0, 58.0))
    # patient-left is the +x half, matching the package's side convention
    left = ell((28.0, 0.0, 0.0), (20.0, 28.0, 36.0))
    right = ell((-28.0, 0.0, 0.0), (20.0, 28.0, 36.0))
    hu = np.full(g.dims, -1000.0, dtype=np.float32)
    hu[body] = 40.0
    hu[left | right] = -800.0
    return Volume(g, hu), Mask(g, left), Mask(g, right)


def ggo_phantom(n=48, radius=10.0):
    """A -400 HU ground-glass ball inside uniform -800 HU lung tissue."""
    half = n / 2.0
    g = make_grid(n, origin=(-(half - 0.5),) * 3)
    c = voxel_centers_mm(g)
    ball = (c**2).sum(axis=-1) <= radius**2
    hu = np.where(ball, -400.0, -800.0).astype(np.float32)
    return Volume(g, hu), Mask(g, ball)
