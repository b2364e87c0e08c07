"""Affine registration of distance maps by multi-resolution descent.

The solver minimizes the mean squared difference between the warped moving
map and the fixed map over the 12 affine parameters, coarse to fine. All
sampling lattices and the identity initialization are fixed, so results are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, OrientationError, RegistrationError
from .grid import DistanceMap, Grid
from .resample import resample

LEVEL_FACTORS = (4.0, 2.0, 1.0)
MAX_LEVEL_ITERATIONS = 200
FINE_STRIDE = 2
DIVERGENCE_LIMIT = 10
MIN_STEP_MM = 1e-4


@dataclass(frozen=True)
class AffineTransform:
    """World-space map y = matrix @ x + translation (mm)."""

    matrix: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        if abs(np.linalg.det(m)) <= 1e-9:
            raise DegenerateInputError("affine matrix is singular")
        m.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.eye(3), np.zeros(3))

    def inverse(self) -> "AffineTransform":
        inv = np.linalg.inv(self.matrix)
        return AffineTransform(inv, -inv @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.matrix.T + self.translation


def _require_axis_aligned(grid: Grid, name: str) -> None:
    if not grid.is_identity_direction():
        raise OrientationError(f"{name} map must be in RAI orientation (reorient first)")


class _MapSampler:
    """Trilinear sampling of a map with the interpolant's own gradient.

    The gradient is the exact derivative of the piecewise-trilinear value,
    not a smoothed estimate, so descent directions stay consistent with the
    sampled cost down to rounding noise. Coordinates are clamped, matching
    edge-value extension.
    """

    def __init__(self, d: DistanceMap):
        self.origin = np.asarray(d.origin)
        self.spacing = np.asarray(d.spacing)
        self.values = d.voxels.astype(np.float64)
        self.n = np.asarray(d.dims, dtype=np.int64)
        if (self.n < 2).any():
            raise DegenerateInputError("map must span at least 2 voxels per axis")

    def sample(self, world: np.ndarray, with_grad: bool):
        idx = (world - self.origin) / self.spacing
        idx = np.clip(idx, 0.0, self.n - 1.0)
        cell = np.minimum(idx.astype(np.int64), self.n - 2)
        fx, fy, fz = (idx - cell).T
        i, j, k = cell.T
        v = self.values
        c000, c100 = v[i, j, k], v[i + 1, j, k]
        c010, c110 = v[i, j + 1, k], v[i + 1, j + 1, k]
        c001, c101 = v[i, j, k + 1], v[i + 1, j, k + 1]
        c011, c111 = v[i, j + 1, k + 1], v[i + 1, j + 1, k + 1]
        c00 = c000 + fx * (c100 - c000)
        c10 = c010 + fx * (c110 - c010)
        c01 = c001 + fx * (c101 - c001)
        c11 = c011 + fx * (c111 - c011)
        c0 = c00 + fy * (c10 - c00)
        c1 = c01 + fy * (c11 - c01)
        val = c0 + fz * (c1 - c0)
        if not with_grad:
            return val, None
        gz = (c1 - c0) / self.spacing[2]
        gy = ((c10 - c00) * (1.0 - fz) + (c11 - c01) * fz) / self.spacing[1]
        d00, d10 = c100 - c000, c110 - c010
        d01, d11 = c101 - c001, c111 - c011
        gx = (
            (d00 * (1.0 - fy) + d10 * fy) * (1.0 - fz)
            + (d01 * (1.0 - fy) + d11 * fy) * fz
        ) / self.spacing[0]
        return val, np.stack([gx, gy, gz], axis=-1)


def apply_transform(moving: DistanceMap, t: AffineTransform, target: Grid) -> DistanceMap:
    """Resample moving under the transform: out(x) = moving(t^-1 (x))."""
    _require_axis_aligned(moving.grid, "moving")
    _require_axis_aligned(target, "target")
    axes = [np.arange(n, dtype=np.float64) for n in target.dims]
    ii, jj, kk = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) * np.asarray(target.spacing)
    pts += np.asarray(target.origin)
    vals, _ = _MapSampler(moving).sample(t.inverse().apply(pts), False)
    return DistanceMap(target, vals.reshape(target.dims).astype(np.float32))


def _level_lattice(d: DistanceMap, stride: int) -> np.ndarray:
    axes = [np.arange(0, n, stride, dtype=np.float64) for n in d.dims]
    ii, jj, kk = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) * np.asarray(d.spacing)
    return pts + np.asarray(d.origin)


def _optimize_level(
    moving: DistanceMap, fixed: DistanceMap, params: np.ndarray, stride: int, strict: bool
):
    pts = _level_lattice(fixed, stride)
    pts_sq = pts * pts
    fixed_vals = fixed.voxels.astype(np.float64)[::stride, ::stride, ::stride].ravel()
    sampler = _MapSampler(moving)
    n_pts = len(pts)
    extent = np.asarray(fixed.dims) * np.asarray(fixed.spacing)
    length = 0.5 * float(extent.max())

    def evaluate(p):
        warped = pts @ p[:9].reshape(3, 3).T + p[9:]
        val, g = sampler.sample(warped, True)
        r = val - fixed_vals
        c = float(r @ r) / n_pts
        if not np.isfinite(c):
            raise RegistrationError("non-finite registration cost")
        return c, r, g

    cost, r, g = evaluate(params)

    # every step is taken and the size adapted afterwards: doubled when the
    # cost fell, cut when it rose. The gradient is fresh at each iterate, so
    # a run of rising steps means genuine divergence, not a stale direction.
    best_params, best_cost = params, cost
    cap = 2.0 * float(max(fixed.spacing)) * stride
    step = np.inf
    increases = 0
    for _ in range(MAX_LEVEL_ITERATIONS):
        rg = r[:, None] * g
        grad = np.concatenate([(rg.T @ pts).ravel(), rg.sum(axis=0)]) * (2.0 / n_pts)
        # diagonal Gauss-Newton scaling per parameter
        g_sq = g * g
        diag = np.concatenate([(g_sq.T @ pts_sq).ravel(), g_sq.sum(axis=0)]) * (2.0 / n_pts)
        top = float(diag.max())
        if top <= 0.0:
            break
        direction = -grad / np.maximum(diag, 1e-12 * top)
        move = float(np.abs(direction[9:]).max() + np.abs(direction[:9]).max() * length)
        if move <= 0.0:
            break
        step = min(step, cap / move)
        if step * move < MIN_STEP_MM:
            break
        params = params + step * direction
        c_new, r, g = evaluate(params)
        flat = 1e-12 * max(cost, 1.0)
        if c_new < cost - flat:
            step *= 2.0
            increases = 0
        elif c_new > cost + flat:
            increases += 1
            if increases >= DIVERGENCE_LIMIT:
                if strict:
                    raise RegistrationError(
                        f"cost increased {DIVERGENCE_LIMIT} consecutive steps"
                    )
                break
            step *= 0.25
        else:
            step *= 0.5
        cost = c_new
        if cost < best_cost:
            best_params, best_cost = params, cost
    return best_params, best_cost


def register_affine(moving: DistanceMap, fixed: DistanceMap) -> AffineTransform:
    """12-parameter affine aligning moving onto fixed (moving composed with
    the inverse transform matches fixed in the least-squares sense)."""
    _require_axis_aligned(moving.grid, "moving")
    _require_axis_aligned(fixed.grid, "fixed")
    if np.ptp(moving.voxels) == 0 or np.ptp(fixed.voxels) == 0:
        raise DegenerateInputError("registration needs nonuniform distance maps")

    # params hold the sampling map S = T^-1: warped(x) = moving(S x + t)
    params = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
    for factor in LEVEL_FACTORS:
        if factor != 1.0:
            target = tuple(s * factor for s in fixed.spacing)
            mov_l = resample(moving, target, method="down")
            fix_l = resample(fixed, target, method="down")
            stride = 1
        else:
            mov_l, fix_l = moving, fixed
            stride = FINE_STRIDE
        params, _cost = _optimize_level(mov_l, fix_l, params, stride, strict=factor == 1.0)

    sampling = AffineTransform(params[:9].reshape(3, 3), params[9:])
    return sampling.inverse()
