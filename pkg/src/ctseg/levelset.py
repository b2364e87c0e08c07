"""Narrow-band level-set evolution driven by HU thresholds.

The front moves under a blend of a binary threshold speed, mean curvature
and (optionally) the pull of a shape-model distance field. Updates are
Jacobi-style sweeps over a sparse narrow band, reinitialized periodically
to an exact signed distance map, so runs are bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .distance import signed_distance
from .errors import ConfigError, GeometryError, SeedError
from .grid import DistanceMap, Grid, Mask, Volume
from .resample import resample, resample_mask_to_grid

REINIT_EVERY = 20
BAND_REBUILD_EVERY = 5
BAND_HALF_WIDTH = 4  # voxels on each side of the interface
CONVERGED_STREAK = 12
# an out-of-range voxel counts as interior when the fitted model field puts
# it at least this deep inside; the shell below the margin stays data-driven
# so registration residuals cannot push the front past a visible boundary
MODEL_CLAIM_MARGIN_MM = 1.0

LUNG_HU_RANGE = (-860.0, -200.0)
LESION_HU_RANGE = (-700.0, 200.0)
MIN_LUNG_COMPONENT_ML = 50.0


@dataclass(frozen=True)
class LevelSetParams:
    """Evolution parameters; weights are convex-combination shares."""

    t_low: float
    t_high: float
    curvature_weight: float = 0.6
    model_weight: float = 0.0
    max_iterations: int = 500
    convergence_tol: float = 0.001
    step_size: float = 0.5  # voxels per iteration

    def __post_init__(self):
        if not self.t_low < self.t_high:
            raise ConfigError(f"t_low must be below t_high, got [{self.t_low}, {self.t_high}]")
        if not 0.0 <= self.curvature_weight <= 1.0:
            raise ConfigError("curvature_weight must be in [0, 1]")
        if not 0.0 <= self.model_weight <= 1.0:
            raise ConfigError("model_weight must be in [0, 1]")
        if self.curvature_weight + self.model_weight > 1.0:
            raise ConfigError("curvature_weight + model_weight must not exceed 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if not 0.0 < self.convergence_tol < 1.0:
            raise ConfigError("convergence_tol must be in (0, 1)")
        if self.step_size <= 0.0:
            raise ConfigError("step_size must be positive")


LUNG_LEVELSET = LevelSetParams(*LUNG_HU_RANGE, curvature_weight=0.6)
LESION_LEVELSET = LevelSetParams(*LESION_HU_RANGE, curvature_weight=0.6)

SeedRegion = Union[Mask, Sequence, np.ndarray]


def _seed_voxels(grid: Grid, seed: SeedRegion) -> np.ndarray:
    if isinstance(seed, Mask):
        if not seed.grid.same_geometry(grid):
            raise SeedError("seed mask geometry differs from the volume")
        return seed.bool_voxels.copy()
    coords = np.atleast_2d(np.asarray(seed, dtype=np.int64))
    if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] == 0:
        raise SeedError("seed coordinates must be a non-empty (N, 3) list")
    dims = np.asarray(grid.dims)
    if (coords < 0).any() or (coords >= dims).any():
        raise SeedError("seed coordinate outside the volume")
    out = np.zeros(grid.dims, dtype=bool)
    out[coords[:, 0], coords[:, 1], coords[:, 2]] = True
    return out


class _Band:
    """Flat indices of the active band plus clipped-neighbor gather tables."""

    def __init__(self, flat: np.ndarray, dims, spacing):
        nx, ny, nz = dims
        hx, hy, hz = spacing
        i, rem = np.divmod(flat, ny * nz)
        j, k = np.divmod(rem, nz)
        ip = np.minimum(i + 1, nx - 1)
        im = np.maximum(i - 1, 0)
        jp = np.minimum(j + 1, ny - 1)
        jm = np.maximum(j - 1, 0)
        kp = np.minimum(k + 1, nz - 1)
        km = np.maximum(k - 1, 0)

        def fl(a, b, c):
            return (a * ny + b) * nz + c

        self.flat = flat
        self.xp, self.xm = fl(ip, j, k), fl(im, j, k)
        self.yp, self.ym = fl(i, jp, k), fl(i, jm, k)
        self.zp, self.zm = fl(i, j, kp), fl(i, j, km)
        self.xpyp, self.xpym = fl(ip, jp, k), fl(ip, jm, k)
        self.xmyp, self.xmym = fl(im, jp, k), fl(im, jm, k)
        self.xpzp, self.xpzm = fl(ip, j, kp), fl(ip, j, km)
        self.xmzp, self.xmzm = fl(im, j, kp), fl(im, j, km)
        self.ypzp, self.ypzm = fl(i, jp, kp), fl(i, jp, km)
        self.ymzp, self.ymzm = fl(i, jm, kp), fl(i, jm, km)
        # central-difference spans honour clipping at the grid border
        self.dx = ((ip - im) * hx).astype(np.float32)
        self.dy = ((jp - jm) * hy).astype(np.float32)
        self.dz = ((kp - km) * hz).astype(np.float32)
        self.hx2 = np.float32(hx * hx)
        self.hy2 = np.float32(hy * hy)
        self.hz2 = np.float32(hz * hz)


def _dilate_flat(flat: np.ndarray, dims, steps: int) -> np.ndarray:
    """6-connected dilation of a flat voxel-index set."""
    nx, ny, nz = dims
    i, rem = np.divmod(flat, ny * nz)
    j, k = np.divmod(rem, nz)
    for _ in range(steps):
        ii = np.concatenate([i, i + 1, i - 1, i, i, i, i])
        jj = np.concatenate([j, j, j, j + 1, j - 1, j, j])
        kk = np.concatenate([k, k, k, k, k, k + 1, k - 1])
        ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny) & (kk >= 0) & (kk < nz)
        ii, jj, kk = ii[ok], jj[ok], kk[ok]
        flat = np.unique((ii * ny + jj) * nz + kk)
        i, rem = np.divmod(flat, ny * nz)
        j, k = np.divmod(rem, nz)
    return flat


def _initial_band(pos: np.ndarray, dims, spacing) -> _Band:
    iface = np.zeros(pos.shape, dtype=bool)
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        diff = pos[tuple(lo)] != pos[tuple(hi)]
        iface[tuple(lo)] |= diff
        iface[tuple(hi)] |= diff
    flat = np.flatnonzero(iface.ravel())
    if flat.size == 0:
        flat = np.flatnonzero(pos.ravel())
    return _Band(_dilate_flat(flat, dims, BAND_HALF_WIDTH), dims, spacing)


def _rebuild_band(phi: np.ndarray, band: _Band, dims, spacing) -> _Band:
    # the front cannot leave the previous band between rebuilds, so the
    # interface search stays sparse
    s = phi[band.flat] > 0
    nb_pos = (
        (phi[band.xp] > 0)
        | (phi[band.xm] > 0)
        | (phi[band.yp] > 0)
        | (phi[band.ym] > 0)
        | (phi[band.zp] > 0)
        | (phi[band.zm] > 0)
    )
    nb_neg = (
        (phi[band.xp] <= 0)
        | (phi[band.xm] <= 0)
        | (phi[band.yp] <= 0)
        | (phi[band.ym] <= 0)
        | (phi[band.zp] <= 0)
        | (phi[band.zm] <= 0)
    )
    iface = band.flat[(s & nb_neg) | (~s & nb_pos)]
    if iface.size == 0:
        return band
    return _Band(_dilate_flat(iface, dims, BAND_HALF_WIDTH), dims, spacing)


ModelFn = Callable[[int, np.ndarray], np.ndarray]


def _evolve(
    v: Volume,
    seed: np.ndarray,
    params: LevelSetParams,
    confine: bool,
    model_fn: Optional[ModelFn] = None,
) -> np.ndarray:
    """Run the evolution; returns the final float32 level-set field."""
    grid = v.grid
    dims = grid.dims
    h = np.float32(min(grid.spacing))
    dt = np.float32(params.step_size) * h
    clip_step = np.float32(0.5) * h
    cw = np.float32(params.curvature_weight)
    mw = np.float32(params.model_weight)
    wd = np.float32(1.0) - cw - mw

    hu = v.voxels
    in_range = (hu >= params.t_low) & (hu <= params.t_high)
    dfield = np.where(in_range, np.float32(1.0), np.float32(-1.0)).ravel()

    phi = signed_distance(Mask(grid, seed)).voxels.copy().ravel()
    band = _initial_band(seed, dims, grid.spacing)
    dband = dfield[band.flat]
    flip_budget = int(params.convergence_tol * band.flat.size)
    streak = 0

    claim_mm = np.float32(MODEL_CLAIM_MARGIN_MM)

    for it in range(1, params.max_iterations + 1):
        model = model_fn(it - 1, phi.reshape(dims)) if model_fn is not None else None
        b = band
        p = phi[b.flat]
        pxp, pxm = phi[b.xp], phi[b.xm]
        pyp, pym = phi[b.yp], phi[b.ym]
        pzp, pzm = phi[b.zp], phi[b.zm]

        gx = (pxp - pxm) / b.dx
        gy = (pyp - pym) / b.dy
        gz = (pzp - pzm) / b.dz
        g2 = gx * gx + gy * gy + gz * gz
        gmag = np.sqrt(g2)

        if mw > 0.0 and model is not None:
            mband = model.ravel()[b.flat]
            # the prior claims voxels well inside the fitted field even when
            # their intensity falls outside the threshold range
            force = wd * np.where(mband > claim_mm, np.float32(1.0), dband)
        else:
            mband = None
            force = wd * dband
        if cw > 0.0:
            pxx = (pxp - 2.0 * p + pxm) / b.hx2
            pyy = (pyp - 2.0 * p + pym) / b.hy2
            pzz = (pzp - 2.0 * p + pzm) / b.hz2
            pxy = (phi[b.xpyp] - phi[b.xpym] - phi[b.xmyp] + phi[b.xmym]) / (b.dx * b.dy)
            pxz = (phi[b.xpzp] - phi[b.xpzm] - phi[b.xmzp] + phi[b.xmzm]) / (b.dx * b.dz)
            pyz = (phi[b.ypzp] - phi[b.ypzm] - phi[b.ymzp] + phi[b.ymzm]) / (b.dy * b.dz)
            num = (
                pxx * (gy * gy + gz * gz)
                + pyy * (gx * gx + gz * gz)
                + pzz * (gx * gx + gy * gy)
                - 2.0 * (gx * gy * pxy + gx * gz * pxz + gy * gz * pyz)
            )
            kappa = np.where(g2 >= 1e-16, num / np.maximum(g2, 1e-16) ** 1.5, 0.0)
            force = force + cw * np.clip(kappa * h, -1.0, 1.0).astype(np.float32)
        if mband is not None:
            force = force + mw * (mband - p) / h

        pn = p + np.clip(dt * force * gmag, -clip_step, clip_step)
        if confine:
            pn = np.where(dband < 0, np.minimum(pn, -0.5 * h), pn)
            newly = (pn > 0) & (p <= 0)
            if newly.any():
                open_nb = (pxp > 0) | (pxm > 0) | (pyp > 0) | (pym > 0) | (pzp > 0) | (pzm > 0)
                pn = np.where(newly & ~open_nb, p, pn)

        flips = int(np.count_nonzero((pn > 0) != (p > 0)))
        phi[b.flat] = pn.astype(np.float32)

        streak = streak + 1 if flips <= flip_budget else 0
        if streak >= CONVERGED_STREAK:
            break
        if it % REINIT_EVERY == 0:
            phi = signed_distance(Mask(grid, (phi > 0).reshape(dims))).voxels.copy().ravel()
        if it % BAND_REBUILD_EVERY == 0:
            band = _rebuild_band(phi, band, dims, grid.spacing)
            dband = dfield[band.flat]
            flip_budget = int(params.convergence_tol * band.flat.size)

    return signed_distance(Mask(grid, (phi > 0).reshape(dims))).voxels


def threshold_levelset(v: Volume, params: LevelSetParams, seed: SeedRegion) -> DistanceMap:
    """Grow a seed through the HU range [t_low, t_high] under curvature.

    The front never enters out-of-range voxels and spreads only through
    face-adjacent ones, so with curvature_weight=0 the positive region is
    exactly the in-range flood fill of the seed.
    """
    if params.model_weight != 0.0:
        raise ConfigError("threshold_levelset takes no shape model; model_weight must be 0")
    seed_vox = _seed_voxels(v.grid, seed)
    in_range = (v.voxels >= params.t_low) & (v.voxels <= params.t_high)
    if not (seed_vox & in_range).any():
        raise SeedError("no seed voxel inside the HU range")
    phi = _evolve(v, seed_vox, params, confine=True)
    return DistanceMap(v.grid, phi)


def lung_field_estimate(v: Volume, params: LevelSetParams = LUNG_LEVELSET) -> DistanceMap:
    """Coarse lung region: threshold evolution from automatically picked seeds.

    Seeds are the 26-connected in-range components of at least 50 mL that do
    not touch the lateral (x) image borders; this keeps both lungs and drops
    outside-body air.
    """
    in_range = (v.voxels >= params.t_low) & (v.voxels <= params.t_high)
    if not in_range.any():
        raise SeedError("no voxel inside the lung HU range")
    labels, n = ndimage.label(in_range, structure=np.ones((3, 3, 3), dtype=bool))
    if n == 0:
        raise SeedError("no in-range component")
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    ml_per_voxel = v.grid.voxel_volume_mm3 / 1000.0
    touching = np.union1d(np.unique(labels[0, :, :]), np.unique(labels[-1, :, :]))
    keep = np.zeros(n + 1, dtype=bool)
    keep[1:] = counts[1:] * ml_per_voxel >= MIN_LUNG_COMPONENT_ML
    keep[touching] = False
    if not keep.any():
        raise SeedError("no lung-sized component away from the lateral borders")
    seed = keep[labels]
    return threshold_levelset(v, params, Mask(v.grid, seed))


def multires_levelset(v: Volume, params: LevelSetParams) -> DistanceMap:
    """Two-stage evolution: half resolution first, then full resolution.

    Stage 1 segments the 0.5x downsampled volume seeded with its whole
    in-range region; the upsampled positive region seeds stage 2.
    """
    coarse = resample(v, tuple(2.0 * s for s in v.grid.spacing), method="down")
    c_range = (coarse.voxels >= params.t_low) & (coarse.voxels <= params.t_high)
    if not c_range.any():
        raise SeedError("no voxel inside the HU range at half resolution")
    stage1 = threshold_levelset(coarse, params, Mask(coarse.grid, c_range))
    m1 = stage1.to_mask()
    if not m1.bool_voxels.any():
        raise SeedError("half-resolution stage produced an empty region")
    seed = resample_mask_to_grid(m1, v.grid)
    return threshold_levelset(v, params, seed)


def curvature_at(d: DistanceMap, voxel) -> float:
    """Mean curvature div(grad phi / |grad phi|) at one interior voxel, 1/mm."""
    i, j, k = (int(c) for c in voxel)
    nx, ny, nz = d.dims
    if not (1 <= i <= nx - 2 and 1 <= j <= ny - 2 and 1 <= k <= nz - 2):
        raise GeometryError(f"voxel {(i, j, k)} is not interior to the grid")
    hx, hy, hz = d.spacing
    p = d.voxels[i - 1 : i + 2, j - 1 : j + 2, k - 1 : k + 2].astype(np.float64)

    gx = (p[2, 1, 1] - p[0, 1, 1]) / (2 * hx)
    gy = (p[1, 2, 1] - p[1, 0, 1]) / (2 * hy)
    gz = (p[1, 1, 2] - p[1, 1, 0]) / (2 * hz)
    g2 = gx * gx + gy * gy + gz * gz
    if np.sqrt(g2) < 1e-8:
        return 0.0
    pxx = (p[2, 1, 1] - 2 * p[1, 1, 1] + p[0, 1, 1]) / (hx * hx)
    pyy = (p[1, 2, 1] - 2 * p[1, 1, 1] + p[1, 0, 1]) / (hy * hy)
    pzz = (p[1, 1, 2] - 2 * p[1, 1, 1] + p[1, 1, 0]) / (hz * hz)
    pxy = (p[2, 2, 1] - p[2, 0, 1] - p[0, 2, 1] + p[0, 0, 1]) / (4 * hx * hy)
    pxz = (p[2, 1, 2] - p[2, 1, 0] - p[0, 1, 2] + p[0, 1, 0]) / (4 * hx * hz)
    pyz = (p[1, 2, 2] - p[1, 2, 0] - p[1, 0, 2] + p[1, 0, 0]) / (4 * hy * hz)
    num = (
        pxx * (gy * gy + gz * gz)
        + pyy * (gx * gx + gz * gz)
        + pzz * (gx * gx + gy * gy)
        - 2 * (gx * gy * pxy + gx * gz * pxz + gy * gz * pyz)
    )
    return float(num / g2**1.5)
