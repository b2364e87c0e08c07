"""Synthetic CT phantoms for demos, smoke runs, and quantitative checks.

A body cylinder with two ellipsoidal air-filled lungs, optionally carrying a
ground-glass ball in the left lung and a dense consolidation clipped against
the right lung wall. All geometry is analytic, so every structure comes with
an exact mask. Dimensions scale linearly with the requested world extent;
the reference layout is a 128 mm cube.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distance import signed_distance
from .grid import Grid, Mask, Volume
from .shapemodel import ShapeModel, build_shape_model

AIR_HU = -1000.0
BODY_HU = 40.0
LUNG_HU = -800.0
GGO_HU = -400.0
CONSOLIDATION_HU = -100.0

REFERENCE_EXTENT_MM = 128.0
# reference-layout geometry, world mm, patient-left = +x
BODY_RADII = (58.0, 44.0)
LEFT_CENTER = (30.0, 0.0, 0.0)
LEFT_SEMI_AXES = (22.0, 28.0, 44.0)
RIGHT_CENTER = (-30.0, 0.0, 0.0)
RIGHT_SEMI_AXES = (24.0, 30.0, 46.0)
GGO_CENTER = (30.0, 4.0, 8.0)
GGO_RADIUS = 10.0
CONSOLIDATION_CENTER = (-48.0, 0.0, -10.0)
CONSOLIDATION_RADIUS = 8.0


@dataclass(frozen=True)
class LungPhantom:
    volume: Volume
    left: Mask
    right: Mask
    left_semi_axes: tuple
    right_semi_axes: tuple
    ggo: Optional[Mask] = None
    consolidation: Optional[Mask] = None


def _centered_grid(n: int, spacing: float) -> Grid:
    origin = -spacing * (n - 1) / 2.0
    return Grid((n, n, n), (spacing,) * 3, (origin,) * 3, np.eye(3))


def _world_axes(grid: Grid):
    xs = [grid.origin[a] + grid.spacing[a] * np.arange(grid.dims[a]) for a in range(3)]
    return xs[0][:, None, None], xs[1][None, :, None], xs[2][None, None, :]


def _ellipsoid(grid: Grid, center, semi_axes) -> np.ndarray:
    x, y, z = _world_axes(grid)
    q = (
        ((x - center[0]) / semi_axes[0]) ** 2
        + ((y - center[1]) / semi_axes[1]) ** 2
        + ((z - center[2]) / semi_axes[2]) ** 2
    )
    return q <= 1.0


def _ball(grid: Grid, center, radius) -> np.ndarray:
    return _ellipsoid(grid, center, (radius, radius, radius))


def make_lung_phantom(
    n: int = 128, spacing: float = 1.0, with_lesions: bool = False
) -> LungPhantom:
    """Two-lung CT phantom with analytic masks.

    Air outside the body, +40 HU soft tissue, -800 HU lungs; with_lesions
    adds a -400 HU ground-glass ball and a -100 HU consolidation that the
    right lung wall clips.
    """
    grid = _centered_grid(n, spacing)
    f = (n * spacing) / REFERENCE_EXTENT_MM
    x, y, z = _world_axes(grid)
    body = ((x / (f * BODY_RADII[0])) ** 2 + (y / (f * BODY_RADII[1])) ** 2) <= 1.0
    body = np.broadcast_to(body, grid.dims)

    left_axes = tuple(f * a for a in LEFT_SEMI_AXES)
    right_axes = tuple(f * a for a in RIGHT_SEMI_AXES)
    left = _ellipsoid(grid, tuple(f * c for c in LEFT_CENTER), left_axes)
    right = _ellipsoid(grid, tuple(f * c for c in RIGHT_CENTER), right_axes)

    hu = np.full(grid.dims, AIR_HU, dtype=np.float32)
    hu[body] = BODY_HU
    hu[left | right] = LUNG_HU

    ggo = None
    cons = None
    if with_lesions:
        ggo_vox = _ball(grid, tuple(f * c for c in GGO_CENTER), f * GGO_RADIUS) & left
        cons_vox = (
            _ball(grid, tuple(f * c for c in CONSOLIDATION_CENTER), f * CONSOLIDATION_RADIUS)
            & right
        )
        hu[ggo_vox] = GGO_HU
        hu[cons_vox] = CONSOLIDATION_HU
        ggo = Mask(grid, ggo_vox.astype(np.uint8))
        cons = Mask(grid, cons_vox.astype(np.uint8))

    return LungPhantom(
        volume=Volume(grid, hu),
        left=Mask(grid, left.astype(np.uint8)),
        right=Mask(grid, right.astype(np.uint8)),
        left_semi_axes=left_axes,
        right_semi_axes=right_axes,
        ggo=ggo,
        consolidation=cons,
    )


# per-sample semi-axis scale factors for the training families
_TRAINING_SCALES = (
    (1.00, 1.00, 1.00),
    (1.10, 0.95, 1.00),
    (0.90, 1.05, 1.02),
    (1.05, 1.00, 0.94),
    (0.96, 0.90, 1.06),
)


def training_maps(side: str, count: int = 5, n: int = 64, spacing: float = 2.0):
    """Ellipsoid distance maps with jittered semi-axes at the side's position.

    The grid extent scales with n * spacing exactly like make_lung_phantom,
    so models trained here start out roughly posed for the matching phantom.
    """
    f = (n * spacing) / REFERENCE_EXTENT_MM
    base = LEFT_SEMI_AXES if side == "left" else RIGHT_SEMI_AXES
    center = LEFT_CENTER if side == "left" else RIGHT_CENTER
    grid = _centered_grid(n, spacing)
    out = []
    for scale in _TRAINING_SCALES[: max(2, min(count, len(_TRAINING_SCALES)))]:
        axes = tuple(f * b * s for b, s in zip(base, scale))
        mask = _ellipsoid(grid, tuple(f * c for c in center), axes)
        out.append(signed_distance(Mask(grid, mask.astype(np.uint8))))
    return out


def phantom_models(n: int = 64, spacing: float = 2.0):
    """Shape models trained on the jittered ellipsoid families."""
    left = build_shape_model(training_maps("left", n=n, spacing=spacing), "left")
    right = build_shape_model(training_maps("right", n=n, spacing=spacing), "right")
    return left, right
