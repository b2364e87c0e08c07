"""Core value types: sampling grid, volume, mask, distance map, mesh.

All world coordinates are millimetres in the LPS frame (+x right-to-left,
+y anterior-to-posterior, +z inferior-to-superior). Voxel arrays are indexed
``[ix, iy, iz]`` and treated as immutable once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

ORTHO_TOL = 1e-6


def _as_tuple3(v, kind=float) -> tuple:
    t = tuple(kind(x) for x in v)
    if len(t) != 3:
        raise GeometryError(f"expected 3 components, got {len(t)}")
    return t


@dataclass(frozen=True)
class Grid:
    """Regular sampling grid: dims, spacing (mm), origin (mm), direction cosines.

    ``direction`` is a row-major 3x3 orthonormal matrix mapping index axes to
    world axes. Voxel centre of index (i,j,k) sits at
    ``origin + direction @ (spacing * (i,j,k))``.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    direction: tuple = field(default=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)))

    def __post_init__(self):
        object.__setattr__(self, "dims", _as_tuple3(self.dims, int))
        object.__setattr__(self, "spacing", _as_tuple3(self.spacing))
        object.__setattr__(self, "origin", _as_tuple3(self.origin))
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3, 3):
            raise GeometryError(f"direction must be 3x3, got {d.shape}")
        object.__setattr__(self, "direction", tuple(tuple(row) for row in d))
        if any(n < 1 for n in self.dims):
            raise GeometryError(f"dims must be positive, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise GeometryError(f"spacing must be positive, got {self.spacing}")
        if not np.allclose(d @ d.T, np.eye(3), atol=ORTHO_TOL):
            raise GeometryError("direction matrix is not orthonormal within 1e-6")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def direction_matrix(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=float)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def is_identity_direction(self, tol: float = 1e-3) -> bool:
        return bool(np.allclose(self.direction_matrix, np.eye(3), atol=tol))

    def index_to_world(self, idx) -> np.ndarray:
        """Map (continuous) voxel indices, shape (...,3), to world mm."""
        idx = np.asarray(idx, dtype=float)
        phys = idx * np.asarray(self.spacing)
        return phys @ self.direction_matrix.T + np.asarray(self.origin)

    def world_to_index(self, pts) -> np.ndarray:
        """Map world-mm points, shape (...,3), to continuous voxel indices."""
        pts = np.asarray(pts, dtype=float)
        phys = (pts - np.asarray(self.origin)) @ self.direction_matrix
        return phys / np.asarray(self.spacing)

    def same_geometry(self, other: "Grid", tol: float = 1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.direction_matrix, other.direction_matrix, atol=tol)
        )


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class _GridArray:
    """Base for voxel fields bound to a grid. Arrays are read-only."""

    _dtype: np.dtype

    def __init__(self, grid: Grid, voxels: np.ndarray):
        voxels = np.ascontiguousarray(voxels, dtype=self._dtype)
        if voxels.shape != grid.dims:
            raise GeometryError(f"voxels shape {voxels.shape} != grid dims {grid.dims}")
        self.grid = grid
        self.voxels = _freeze(voxels)

    @property
    def dims(self):
        return self.grid.dims

    @property
    def spacing(self):
        return self.grid.spacing

    @property
    def origin(self):
        return self.grid.origin

    @property
    def direction(self):
        return self.grid.direction_matrix


class Volume(_GridArray):
    """Scalar intensity volume (HU for CT input)."""

    _dtype = np.dtype(np.float32)


class Mask(_GridArray):
    """Binary label volume; voxels are 0 or 1."""

    _dtype = np.dtype(np.uint8)

    def __init__(self, grid: Grid, voxels: np.ndarray):
        v = np.asarray(voxels)
        if v.dtype == bool:
            v = v.astype(np.uint8)
        super().__init__(grid, v)
        bad = (self.voxels > 1).any()
        if bad:
            raise GeometryError("mask voxels must be 0 or 1")

    @property
    def bool_voxels(self) -> np.ndarray:
        return self.voxels.astype(bool)


class DistanceMap(_GridArray):
    """Signed distance field in mm: positive inside, negative outside."""

    _dtype = np.dtype(np.float32)

    def to_mask(self) -> Mask:
        return Mask(self.grid, self.voxels > 0)


@dataclass
class Mesh:
    """Triangle surface mesh; vertices in world mm, 0-based triangle indices."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = _freeze(np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        self.triangles = _freeze(np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise GeometryError("triangle indices out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        return Mesh(vertices, np.array(self.triangles))


def mask_volume(volume: Volume, mask: Mask, fill_hu: float = -2000.0) -> Volume:
    """Replace intensities outside ``mask`` with a constant fill value."""
    if not volume.grid.same_geometry(mask.grid):
        raise GeometryError("volume and mask grids differ")
    out = np.array(volume.voxels)
    out[mask.voxels == 0] = np.float32(fill_hu)
    return Volume(volume.grid, out)


def volume_ml(mask: Mask) -> float:
    """Volume of the positive voxels in millilitres."""
    n = int(np.count_nonzero(mask.voxels))
    return n * mask.grid.voxel_volume_mm3 / 1000.0
