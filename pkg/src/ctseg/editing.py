"""Interactive editing tools over meshes and distance maps.

Five deterministic operations (magnet, polyline profile, spline surface,
brush, smart paint) plus a replayable event script that dispatches them.
Mesh-domain and map-domain edits convert into each other lazily, so runs of
same-domain events skip the mesh/mask round trip.

All dense solves go through a local partial-pivot LU: BLAS-backed routines
re-associate sums with the active thread count, which would break bit-exact
replay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .distance import signed_distance
from .errors import (
    ConfigError,
    CTSegError,
    GeometryError,
    ScriptError,
    SeedError,
    SingularSystemError,
)
from .grid import DistanceMap, Grid, Mask, Mesh, Volume
from .levelset import LevelSetParams, threshold_levelset
from .mesh import extract_mesh, mesh_to_mask

TARGETS = ("lungs-left", "lungs-right", "lesions")

SAMPLE_STEP_MM = 2.0  # arc-length spacing for polyline / spline resampling
OFFSET_MM = 2.0  # spline constraint offset along in-plane normals
STROKE_EXTENSION = 0.25  # fraction of the last segment added past the cursor
SIGMA_FLOOR_HU = 10.0
SMART_PAINT_CURVATURE = 0.3
BOX_GROWTH_FRACTION = 0.25  # spline evaluation box growth, relative to bbox diagonal
BOX_GROWTH_MIN_MM = 10.0


def _point3(value, name: str) -> tuple:
    try:
        t = tuple(float(x) for x in value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} must be a 3D point") from e
    if len(t) != 3:
        raise ConfigError(f"{name} must have 3 components, got {len(t)}")
    return t


def _point_seq(value, name: str, min_points: int) -> tuple:
    pts = tuple(_point3(p, name) for p in value)
    if len(pts) < min_points:
        raise ConfigError(f"{name} needs at least {min_points} points, got {len(pts)}")
    return pts


def _point_seqs(value, name: str, min_points: int) -> tuple:
    seqs = tuple(_point_seq(s, name, min_points) for s in value)
    if not seqs:
        raise ConfigError(f"{name} must contain at least one entry")
    return seqs


def _choice(value, options, name: str) -> str:
    if value not in options:
        raise ConfigError(f"{name} must be one of {options}, got {value!r}")
    return value


@dataclass(frozen=True)
class Magnet:
    """Gaussian-weighted drag of mesh vertices around a click point."""

    click: tuple
    drag: tuple
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "click", _point3(self.click, "click"))
        object.__setattr__(self, "drag", _point3(self.drag, "drag"))
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.sigma <= 0.0:
            raise ConfigError("sigma must be positive")


@dataclass(frozen=True)
class TpsPolyline:
    """Pull the mesh onto drawn polylines via a thin plate spline field."""

    polylines: tuple

    def __post_init__(self):
        object.__setattr__(self, "polylines", _point_seqs(self.polylines, "polyline", 2))


@dataclass(frozen=True)
class PolySpline:
    """Closed planar loops interpolated into a surface, merged with a map."""

    splines: tuple
    merge_mode: str

    def __post_init__(self):
        object.__setattr__(self, "splines", _point_seqs(self.splines, "spline", 3))
        object.__setattr__(
            self, "merge_mode", _choice(self.merge_mode, ("union", "replace"), "merge_mode")
        )


@dataclass(frozen=True)
class Brush:
    """Spherical add/remove directly on the distance map."""

    center: tuple
    radius: float
    mode: str

    def __post_init__(self):
        object.__setattr__(self, "center", _point3(self.center, "center"))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "mode", _choice(self.mode, ("add", "remove"), "mode"))
        if self.radius <= 0.0:
            raise ConfigError("radius must be positive")


@dataclass(frozen=True)
class SmartPaint:
    """Stroke-trained intensity segmentation merged into the map."""

    stroke: tuple
    tube_radius: float
    mode: str
    k_sigma: float = 2.5
    roi_margin: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "stroke", _point_seq(self.stroke, "stroke", 2))
        object.__setattr__(self, "tube_radius", float(self.tube_radius))
        object.__setattr__(self, "k_sigma", float(self.k_sigma))
        object.__setattr__(self, "roi_margin", float(self.roi_margin))
        object.__setattr__(self, "mode", _choice(self.mode, ("add", "remove"), "mode"))
        if self.tube_radius <= 0.0:
            raise ConfigError("tube_radius must be positive")
        if self.k_sigma <= 0.0:
            raise ConfigError("k_sigma must be positive")
        if self.roi_margin < 0.0:
            raise ConfigError("roi_margin must not be negative")


EditEvent = Union[Magnet, TpsPolyline, PolySpline, Brush, SmartPaint]
EVENT_TYPES = (Magnet, TpsPolyline, PolySpline, Brush, SmartPaint)


@dataclass(frozen=True)
class EditScript:
    """Ordered (target, event) pairs; replay on equal state is bit-exact."""

    events: tuple = ()

    def __post_init__(self):
        events = tuple(self.events)
        for pair in events:
            if len(pair) != 2 or not isinstance(pair[0], str) or not isinstance(pair[1], EVENT_TYPES):
                raise ConfigError("script entries must be (target, event) pairs")
        object.__setattr__(self, "events", events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EditState:
    """Editable session snapshot: the source volume plus per-target maps."""

    volume: Volume
    maps: dict

    def __post_init__(self):
        maps = dict(self.maps)
        for target, dmap in maps.items():
            if target not in TARGETS:
                raise ConfigError(f"unknown edit target {target!r}; expected one of {TARGETS}")
            if not dmap.grid.same_geometry(self.volume.grid):
                raise GeometryError(f"map for {target!r} is not on the volume grid")
        object.__setattr__(self, "maps", maps)


def _lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # partial-pivot LU on numpy elementwise ops and pairwise-sum reductions
    # only; results do not depend on BLAS thread count
    a = np.array(a, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = a.shape[0]
    tol = 1e-12 * max(float(np.abs(a).max()), 1.0)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= tol:
            raise SingularSystemError("interpolation system is singular")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        f = a[col + 1 :, col] / a[col, col]
        a[col + 1 :, col + 1 :] -= f[:, None] * a[col, col + 1 :]
        b[col + 1 :] -= f[:, None] * b[col]
    x = np.zeros_like(b)
    for col in range(n - 1, -1, -1):
        acc = b[col] - (a[col, col + 1 :, None] * x[col + 1 :]).sum(axis=0)
        x[col] = acc / a[col, col]
    return x


def _pivot_columns(p: np.ndarray, rel_tol: float = 1e-8) -> list:
    """Greedy selection of an independent subset of affine basis columns.

    Coplanar control sets drop one of [1, x, y, z]; fewer than three
    independent columns means the points are collinear.
    """
    cols = np.array(p, dtype=np.float64)
    tol = rel_tol * max(float(np.sqrt((cols * cols).sum(axis=0)).max()), 1e-300)
    picked: list = []
    for _ in range(cols.shape[1]):
        norms = np.sqrt((cols * cols).sum(axis=0))
        norms[picked] = 0.0
        j = int(np.argmax(norms))
        if norms[j] <= tol:
            break
        picked.append(j)
        u = cols[:, j] / norms[j]
        proj = (u[:, None] * cols).sum(axis=0)
        cols -= u[:, None] * proj[None, :]
    return sorted(picked)


def _fit_biharmonic(points: np.ndarray, rhs: np.ndarray):
    """Interpolant with kernel U(r)=r plus a rank-reduced linear polynomial.

    Returns an evaluator mapping (M, 3) query points to (M, rhs columns).
    Raises SingularSystemError for collinear or coincident control points.
    """
    n = len(points)
    p_full = np.hstack([np.ones((n, 1)), points])
    basis = _pivot_columns(p_full)
    if len(basis) < 3:
        raise SingularSystemError("control points are collinear")
    p = p_full[:, basis]
    diff = points[:, None, :] - points[None, :, :]
    k = np.sqrt((diff * diff).sum(axis=-1))
    m = len(basis)
    a = np.zeros((n + m, n + m))
    a[:n, :n] = k
    a[:n, n:] = p
    a[n:, :n] = p.T
    b = np.zeros((n + m, rhs.shape[1]))
    b[:n] = rhs
    sol = _lu_solve(a, b)
    w, aff = sol[:n], sol[n:]

    def evaluate(q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
        out = np.zeros((len(q), rhs.shape[1]))
        for i in range(n):
            d = q - points[i]
            r = np.sqrt((d * d).sum(axis=-1))
            out += r[:, None] * w[i]
        q_basis = np.hstack([np.ones((len(q), 1)), q])[:, basis]
        for j in range(m):
            out += q_basis[:, j : j + 1] * aff[j]
        return out

    return evaluate


def _resample_polyline(points: np.ndarray, closed: bool = False) -> np.ndarray:
    """Arc-length resampling at SAMPLE_STEP_MM.

    Stops sit at 0, step, 2*step, ...; open polylines keep their endpoint
    when it lies more than 1e-6 mm past the last stop, closed loops never
    duplicate their start.
    """
    pts = np.asarray(points, dtype=np.float64)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.sqrt((np.diff(pts, axis=0) ** 2).sum(axis=-1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s[-1])
    step = SAMPLE_STEP_MM
    if closed:
        count = int(np.floor((total - 1e-9) / step)) + 1 if total > 1e-9 else 1
        stops = [step * i for i in range(count)]
    else:
        stops = [step * i for i in range(int(np.floor(total / step + 1e-9)) + 1)]
        if total - stops[-1] > 1e-6:
            stops.append(total)
    out = np.empty((len(stops), 3))
    for row, stop in enumerate(stops):
        j = int(np.searchsorted(s, stop, side="right")) - 1
        j = min(max(j, 0), len(seg) - 1)
        t = 0.0 if seg[j] == 0 else (stop - s[j]) / seg[j]
        out[row] = pts[j] + t * (pts[j + 1] - pts[j])
    return out


def magnet(mesh: Mesh, click, drag, sigma: float) -> Mesh:
    """Drag vertices by exp(-|p - click|^2 / 2 sigma^2) times the drag vector."""
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ConfigError("sigma must be positive")
    click = np.asarray(click, dtype=np.float64)
    drag = np.asarray(drag, dtype=np.float64)
    d2 = ((mesh.vertices - click) ** 2).sum(axis=1)
    weight = np.exp(-d2 / (2.0 * sigma * sigma))
    return mesh.with_vertices(mesh.vertices + weight[:, None] * drag)


def _greedy_nearest(targets: np.ndarray, vertices: np.ndarray):
    """Globally greedy unique assignment of targets to their nearest vertices.

    Candidate pairs are visited in increasing distance; a vertex or target
    already claimed is skipped. Surplus targets (more than vertices) drop out.
    """
    diff = targets[:, None, :] - vertices[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    order = np.argsort(d, axis=None, kind="stable")
    t_used = np.zeros(len(targets), dtype=bool)
    v_used = np.zeros(len(vertices), dtype=bool)
    pairs = []
    for flat in order:
        ti, vi = divmod(int(flat), len(vertices))
        if t_used[ti] or v_used[vi]:
            continue
        t_used[ti] = True
        v_used[vi] = True
        pairs.append((vi, ti))
        if t_used.all():
            break
    pairs.sort()
    src_idx = np.array([p[0] for p in pairs], dtype=np.int64)
    tgt = targets[[p[1] for p in pairs]]
    return src_idx, tgt


def tps_polyline(mesh: Mesh, polylines) -> Mesh:
    """Deform the mesh so chosen vertices land on the drawn polylines.

    Each polyline is resampled at 2 mm arc length; every sample becomes a
    target whose source is its nearest unclaimed mesh vertex (greedy by
    distance). A 3D thin plate spline with kernel U(r)=r interpolates the
    source-to-target displacements and moves every vertex.
    """
    polys = [np.asarray(p, dtype=np.float64).reshape(-1, 3) for p in polylines]
    if not polys or any(len(p) < 2 for p in polys):
        raise ConfigError("each polyline needs at least 2 points")
    targets = np.vstack([_resample_polyline(p) for p in polys])
    src_idx, tgt = _greedy_nearest(targets, mesh.vertices)
    sources = mesh.vertices[src_idx]
    fit = _fit_biharmonic(sources, tgt - sources)
    return mesh.with_vertices(mesh.vertices + fit(mesh.vertices))


def _plane_normal(points: np.ndarray) -> np.ndarray:
    # Newell's method around the centroid; magnitude is twice the loop area
    c = points.mean(axis=0)
    p = points - c
    q = np.roll(p, -1, axis=0)
    n = np.cross(p, q).sum(axis=0)
    norm = float(np.sqrt((n * n).sum()))
    if norm < 1e-9:
        raise SingularSystemError("spline points are collinear; the loop plane is undefined")
    return n / norm


def _loop_constraints(loop) -> tuple:
    """Zero-valued samples on the loop plus inside/outside offset points."""
    pts = np.asarray(loop, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise ConfigError("each spline needs at least 3 points")
    normal = _plane_normal(pts)
    samples = _resample_polyline(pts, closed=True)
    centroid = samples.mean(axis=0)
    tangent = np.roll(samples, -1, axis=0) - np.roll(samples, 1, axis=0)
    inplane = np.cross(np.broadcast_to(normal, tangent.shape), tangent)
    length = np.sqrt((inplane * inplane).sum(axis=-1, keepdims=True))
    inplane = inplane / np.maximum(length, 1e-12)
    toward = ((centroid - samples) * inplane).sum(axis=-1)
    inward = inplane * np.where(toward >= 0.0, 1.0, -1.0)[:, None]
    points = np.vstack(
        [samples, samples + OFFSET_MM * inward, samples - OFFSET_MM * inward]
    )
    values = np.concatenate(
        [
            np.zeros(len(samples)),
            np.full(len(samples), OFFSET_MM),
            np.full(len(samples), -OFFSET_MM),
        ]
    )
    return points, values


def _rbf_interpolant(splines):
    """Fit the inside-positive loop field; returns (evaluate, points, values)."""
    all_points = []
    all_values = []
    for loop in splines:
        p, v = _loop_constraints(loop)
        all_points.append(p)
        all_values.append(v)
    points = np.vstack(all_points)
    values = np.concatenate(all_values)
    # coincident constraints (self-touching loops) would make the kernel
    # matrix singular; keep the first occurrence
    seen = {}
    keep = []
    for i, pt in enumerate(points):
        key = (round(pt[0], 6), round(pt[1], 6), round(pt[2], 6))
        if key not in seen:
            seen[key] = i
            keep.append(i)
    points = points[keep]
    values = values[keep]
    fit = _fit_biharmonic(points, values[:, None])

    def evaluate(q: np.ndarray) -> np.ndarray:
        return fit(q)[:, 0]

    return evaluate, points, values


def _box_index_bounds(grid: Grid, lo_w, hi_w):
    # voxel index bounds covering every centre inside a world-space box

    corners = np.array(
        [
            [x, y, z]
            for x in (lo_w[0], hi_w[0])
            for y in (lo_w[1], hi_w[1])
            for z in (lo_w[2], hi_w[2])
        ]
    )
    idx = grid.world_to_index(corners)
    lo = np.maximum(np.ceil(idx.min(axis=0) - 1e-6).astype(np.int64), 0)
    hi = np.minimum(np.floor(idx.max(axis=0) + 1e-6).astype(np.int64), np.asarray(grid.dims) - 1)
    return lo, hi


def _box_centers(grid: Grid, lo, hi) -> np.ndarray:
    axes = [np.arange(lo[a], hi[a] + 1) for a in range(3)]
    ii, jj, kk = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([ii, jj, kk], axis=-1).astype(np.float64)
    return grid.index_to_world(idx)


def rbf_surface(splines, grid: Grid) -> DistanceMap:
    """Interpolate closed planar loops into a solid inside-positive region.

    Constraints are loop samples (value 0) plus points offset 2 mm along the
    in-plane inward (+2) and outward (-2) normals; a biharmonic interpolant
    through them is evaluated inside the loops' bounding box grown by 25% of
    its diagonal (at least 10 mm). The sign field is then reinitialized into
    an exact signed distance map, so everything beyond the box stays outside.
    """
    evaluate, points, _ = _rbf_interpolant(splines)
    diag = float(np.sqrt(((points.max(axis=0) - points.min(axis=0)) ** 2).sum()))
    grow = max(BOX_GROWTH_FRACTION * diag, BOX_GROWTH_MIN_MM)
    lo, hi = _box_index_bounds(grid, points.min(axis=0) - grow, points.max(axis=0) + grow)
    region = np.zeros(grid.dims, dtype=bool)
    if (lo <= hi).all():
        centers = _box_centers(grid, lo, hi)
        vals = evaluate(centers.reshape(-1, 3)).reshape(centers.shape[:3])
        region[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = vals > 0.0
    return signed_distance(Mask(grid, region))


def merge_region(existing: DistanceMap, addition: DistanceMap, mode: str) -> DistanceMap:
    """union: voxel-wise max (inside-positive); replace: the addition itself."""
    _choice(mode, ("union", "replace"), "mode")
    if not existing.grid.same_geometry(addition.grid):
        raise GeometryError("merge operands must share geometry")
    if mode == "replace":
        return addition
    return DistanceMap(existing.grid, np.maximum(existing.voxels, addition.voxels))


def brush(d: DistanceMap, center, radius: float, mode: str) -> DistanceMap:
    """Spherical edit: add takes max(phi, r - |x-c|), remove min(phi, |x-c| - r)."""
    radius = float(radius)
    if radius <= 0.0:
        raise ConfigError("radius must be positive")
    _choice(mode, ("add", "remove"), "mode")
    # rotation-invariant distance in index space avoids a dims x 3 temporary
    q = d.grid.direction_matrix.T @ (np.asarray(center, np.float64) - np.asarray(d.origin))
    sp = d.spacing
    ax = (sp[0] * np.arange(d.dims[0]) - q[0]) ** 2
    ay = (sp[1] * np.arange(d.dims[1]) - q[1]) ** 2
    az = (sp[2] * np.arange(d.dims[2]) - q[2]) ** 2
    dist = np.sqrt(ax[:, None, None] + ay[None, :, None] + az[None, None, :])
    sphere = (radius - dist).astype(np.float32)
    if mode == "add":
        return DistanceMap(d.grid, np.maximum(d.voxels, sphere))
    return DistanceMap(d.grid, np.minimum(d.voxels, -sphere))


def _polyline_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    best = np.full(len(points), np.inf)
    for a, b in zip(poly[:-1], poly[1:]):
        ab = b - a
        denom = float((ab * ab).sum())
        if denom < 1e-300:
            diff = points - a
            best = np.minimum(best, (diff * diff).sum(axis=-1))
            continue
        t = np.clip(((points - a) * ab).sum(axis=-1) / denom, 0.0, 1.0)
        diff = points - (a + t[:, None] * ab)
        best = np.minimum(best, (diff * diff).sum(axis=-1))
    return np.sqrt(best)


def smart_paint(
    v: Volume,
    d: DistanceMap,
    stroke,
    tube_radius: float,
    k_sigma: float = 2.5,
    roi_margin: float = 10.0,
    mode: str = "add",
) -> DistanceMap:
    """Segment around a stroke from its own intensity statistics.

    The stroke is extended 25% past its last segment; voxels within
    tube_radius of it provide mean/std (std floored at 10 HU) for a
    threshold range mean +- k_sigma * std. A threshold level set runs inside
    the extended stroke's bounding box grown by roi_margin, seeded by the
    tube, and is merged into the map (add: union, remove: carve). Voxels
    outside that box are returned bit-unchanged.
    """
    tube_radius = float(tube_radius)
    k_sigma = float(k_sigma)
    roi_margin = float(roi_margin)
    if tube_radius <= 0.0 or k_sigma <= 0.0 or roi_margin < 0.0:
        raise ConfigError("tube_radius and k_sigma must be positive, roi_margin nonnegative")
    _choice(mode, ("add", "remove"), "mode")
    if not v.grid.same_geometry(d.grid):
        raise GeometryError("volume and distance map must share geometry")
    pts = np.asarray(stroke, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        raise ConfigError("stroke needs at least 2 points")
    idx = v.grid.world_to_index(pts)
    dims = np.asarray(v.grid.dims)
    if (idx < -0.5).any() or (idx > dims - 0.5).any():
        raise GeometryError("stroke leaves the volume domain")
    poly = np.vstack([pts, pts[-1] + STROKE_EXTENSION * (pts[-1] - pts[-2])])

    # feature statistics from the full tube, regardless of the working box
    t_lo, t_hi = _box_index_bounds(grid=v.grid, lo_w=poly.min(0) - tube_radius, hi_w=poly.max(0) + tube_radius)
    if not (t_lo <= t_hi).all():
        raise SeedError("stroke tube holds no voxels")
    t_centers = _box_centers(v.grid, t_lo, t_hi)
    t_dist = _polyline_distance(t_centers.reshape(-1, 3), poly)
    t_sub = (slice(t_lo[0], t_hi[0] + 1), slice(t_lo[1], t_hi[1] + 1), slice(t_lo[2], t_hi[2] + 1))
    samples = v.voxels[t_sub].reshape(-1)[t_dist <= tube_radius]
    if samples.size == 0:
        raise SeedError("stroke tube holds no voxels")
    mean = float(samples.astype(np.float64).mean())
    spread = max(float(samples.astype(np.float64).std()), SIGMA_FLOOR_HU)

    lo, hi = _box_index_bounds(v.grid, poly.min(0) - roi_margin, poly.max(0) + roi_margin)
    sub = (slice(lo[0], hi[0] + 1), slice(lo[1], hi[1] + 1), slice(lo[2], hi[2] + 1))
    sub_dims = tuple(int(hi[a] - lo[a] + 1) for a in range(3))
    sub_grid = Grid(
        sub_dims,
        v.grid.spacing,
        tuple(v.grid.index_to_world(lo.astype(np.float64))),
        v.grid.direction,
    )
    seed = _polyline_distance(_box_centers(v.grid, lo, hi).reshape(-1, 3), poly) <= tube_radius
    params = LevelSetParams(
        mean - k_sigma * spread, mean + k_sigma * spread, curvature_weight=SMART_PAINT_CURVATURE
    )
    paint = threshold_levelset(
        Volume(sub_grid, v.voxels[sub]), params, Mask(sub_grid, seed.reshape(sub_dims))
    )
    out = np.array(d.voxels)
    if mode == "add":
        out[sub] = np.maximum(d.voxels[sub], paint.voxels)
    else:
        out[sub] = np.minimum(d.voxels[sub], -paint.voxels)
    return DistanceMap(d.grid, out)


def apply_edit_script(state: EditState, script: EditScript) -> EditState:
    """Apply events in order, converting mesh/map representations lazily.

    Magnet and polyline events act on a mesh extracted from the target's
    map; region events act on the map itself, re-voxelizing a pending mesh
    first. The final state always carries maps. Failures raise ScriptError
    tagged with the offending event index, chained to the original error.
    """
    reps = {target: ("map", dmap) for target, dmap in state.maps.items()}
    for index, (target, event) in enumerate(script.events):
        if target not in reps:
            raise ScriptError(f"unknown target {target!r}", index)
        try:
            kind, obj = reps[target]
            grid = state.maps[target].grid
            if isinstance(event, (Magnet, TpsPolyline)):
                mesh = obj if kind == "mesh" else extract_mesh(obj)
                if isinstance(event, Magnet):
                    mesh = magnet(mesh, event.click, event.drag, event.sigma)
                else:
                    mesh = tps_polyline(mesh, event.polylines)
                reps[target] = ("mesh", mesh)
            else:
                dmap = obj if kind == "map" else signed_distance(mesh_to_mask(obj, grid))
                if isinstance(event, Brush):
                    dmap = brush(dmap, event.center, event.radius, event.mode)
                elif isinstance(event, PolySpline):
                    dmap = merge_region(dmap, rbf_surface(event.splines, grid), event.merge_mode)
                elif isinstance(event, SmartPaint):
                    dmap = smart_paint(
                        state.volume,
                        dmap,
                        event.stroke,
                        event.tube_radius,
                        event.k_sigma,
                        event.roi_margin,
                        event.mode,
                    )
                else:
                    raise ScriptError(f"unsupported event type {type(event).__name__}", index)
                reps[target] = ("map", dmap)
        except ScriptError:
            raise
        except CTSegError as e:
            raise ScriptError(str(e), index) from e
    maps = {}
    for target, (kind, obj) in reps.items():
        if kind == "mesh":
            maps[target] = signed_distance(mesh_to_mask(obj, state.maps[target].grid))
        else:
            maps[target] = obj
    return EditState(volume=state.volume, maps=maps)
