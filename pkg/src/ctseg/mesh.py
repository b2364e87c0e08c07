"""Surface extraction, voxelization and OBJ mesh files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from skimage import measure

from .distance import DEFAULT_CAP_MM
from .errors import EmptySurfaceError, ParseError, TopologyError
from .grid import DistanceMap, Grid, Mask, Mesh


def _edge_keys(triangles: np.ndarray) -> np.ndarray:
    """Undirected edge keys (int64) of every triangle edge."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    lo = e.min(axis=1).astype(np.int64)
    hi = e.max(axis=1).astype(np.int64)
    return lo << 32 | hi


def check_closed(mesh: Mesh) -> bool:
    """True iff every edge is shared by exactly two triangles."""
    if mesh.n_triangles == 0:
        return False
    _, counts = np.unique(_edge_keys(mesh.triangles), return_counts=True)
    return bool((counts == 2).all())


def signed_volume_mm3(mesh: Mesh) -> float:
    v = mesh.vertices
    t = mesh.triangles
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return float(np.einsum("ij,ij->i", p0, np.cross(p1, p2)).sum() / 6.0)


def extract_mesh(dmap: DistanceMap, cap_mm: float = DEFAULT_CAP_MM) -> Mesh:
    """Marching-cubes surface of the zero level set, vertices in world mm.

    The field is padded with -cap so regions touching the grid border come out
    closed. The returned mesh is consistently wound with positive enclosed
    volume (winding number +1 inside).
    """
    field = np.asarray(dmap.voxels, dtype=np.float64)
    if not (field > 0).any() or not (field <= 0).any():
        raise EmptySurfaceError("field has no zero crossing")

    padded = np.pad(field, 1, mode="constant", constant_values=-float(cap_mm))
    verts, faces, _normals, _vals = measure.marching_cubes(
        padded, level=0.0, spacing=dmap.spacing, allow_degenerate=False
    )
    # undo the one-voxel pad, then go to world coordinates
    verts = verts - np.asarray(dmap.spacing)
    world = verts @ dmap.direction.T + np.asarray(dmap.origin)

    mesh = Mesh(world, faces)
    if signed_volume_mm3(mesh) < 0:
        mesh = Mesh(world, faces[:, [0, 2, 1]])
    if not check_closed(mesh):
        raise TopologyError("marching cubes produced a non-watertight surface")
    return mesh


def mesh_to_mask(mesh: Mesh, grid: Grid) -> Mask:
    """Rasterize a closed mesh: voxel centres with positive winding number.

    Winding numbers come from signed ray crossings along the +x index axis.
    Rays are nudged off the exact lattice to dodge edge/vertex degeneracies;
    voxel centres grazing the surface count as inside (the voxel is inside
    under either the open or the closed crossing rule).
    """
    if not check_closed(mesh):
        raise TopologyError("voxelization needs a closed mesh")

    nx, ny, nz = grid.dims
    idx_verts = grid.world_to_index(mesh.vertices)
    tri = idx_verts[mesh.triangles]  # (T, 3, 3) in continuous index coords

    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = p1 - p0
    e2 = p2 - p0
    # x-component of the index-space normal = 2D cross of the (y,z) projection
    d = e1[:, 1] * e2[:, 2] - e1[:, 2] * e2[:, 1]
    keep = d != 0.0
    if not keep.any():
        return Mask(grid, np.zeros(grid.dims, dtype=np.uint8))
    p0, e1, e2, d = p0[keep], e1[keep], e2[keep], d[keep]
    tri = tri[keep]

    eps_y = np.sqrt(2.0) * 1e-6
    eps_z = np.sqrt(3.0) * 1e-6
    # wide enough to absorb the ray nudge on tilted faces, so centres lying
    # exactly on the surface stay inside; 1e-4 voxel is far below mask scale
    tol = 1e-4

    # row window covers both the nudged rays and rows whose centre grazes
    # the triangle boundary in (y, z)
    ymin = tri[:, :, 1].min(axis=1)
    ymax = tri[:, :, 1].max(axis=1)
    zmin = tri[:, :, 2].min(axis=1)
    zmax = tri[:, :, 2].max(axis=1)
    j0 = np.maximum(np.ceil(ymin - tol).astype(np.int64), 0)
    j1 = np.minimum(np.floor(ymax + tol).astype(np.int64), ny - 1)
    k0 = np.maximum(np.ceil(zmin - tol).astype(np.int64), 0)
    k1 = np.minimum(np.floor(zmax + tol).astype(np.int64), nz - 1)
    cj = j1 - j0 + 1
    ck = k1 - k0 + 1
    valid = (cj > 0) & (ck > 0)
    if not valid.any():
        return Mask(grid, np.zeros(grid.dims, dtype=np.uint8))
    p0, e1, e2, d = p0[valid], e1[valid], e2[valid], d[valid]
    j0, k0, cj, ck = j0[valid], k0[valid], cj[valid], ck[valid]

    # expand each triangle over its (j,k) bounding-box rows
    counts = cj * ck
    t_idx = np.repeat(np.arange(len(counts)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    jj = j0[t_idx] + local // ck[t_idx]
    kk = k0[t_idx] + local % ck[t_idx]

    qy = jj + eps_y - p0[t_idx, 1]
    qz = kk + eps_z - p0[t_idx, 2]
    dd = d[t_idx]
    u = (qy * e2[t_idx, 2] - qz * e2[t_idx, 1]) / dd
    v = (e1[t_idx, 1] * qz - e1[t_idx, 2] * qy) / dd
    hit = (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)

    out = np.zeros((nx, ny * nz), dtype=np.uint8)
    if hit.any():
        xs = p0[t_idx, 0] + u * e1[t_idx, 0] + v * e2[t_idx, 0]
        xs = xs[hit]
        sign = np.where(dd[hit] > 0, 1, -1).astype(np.int32)
        rows = (jj[hit] * nz + kk[hit]).astype(np.int64)

        row_ids, row_compact = np.unique(rows, return_inverse=True)
        n_rows = len(row_ids)
        # winding(i) = sum of signs of crossings "ahead" of voxel centre i;
        # accumulate as difference arrays along x and prefix-sum
        acc_closed = np.zeros((n_rows, nx + 1), dtype=np.int32)
        acc_open = np.zeros((n_rows, nx + 1), dtype=np.int32)
        i_closed = np.minimum(np.floor(xs + tol).astype(np.int64), nx - 1)
        i_open = np.minimum(np.ceil(xs - tol).astype(np.int64) - 1, nx - 1)

        ok = i_closed >= 0
        np.add.at(acc_closed, (row_compact[ok], np.zeros(ok.sum(), dtype=np.int64)), sign[ok])
        np.add.at(acc_closed, (row_compact[ok], i_closed[ok] + 1), -sign[ok])
        ok = i_open >= 0
        np.add.at(acc_open, (row_compact[ok], np.zeros(ok.sum(), dtype=np.int64)), sign[ok])
        np.add.at(acc_open, (row_compact[ok], i_open[ok] + 1), -sign[ok])

        w_closed = np.cumsum(acc_closed[:, :nx], axis=1)
        w_open = np.cumsum(acc_open[:, :nx], axis=1)
        inside_rows = (w_closed >= 1) | (w_open >= 1)
        out[:, row_ids] = inside_rows.T

    # a centre on a mesh edge or vertex can sit where consecutive nudged-ray
    # crossings cancel; resolve it toward inside with an unperturbed test
    # against each triangle, tolerant of the boundary
    ay, az = p0[t_idx, 1], p0[t_idx, 2]
    by, bz = ay + e1[t_idx, 1], az + e1[t_idx, 2]
    cy, cz = ay + e2[t_idx, 1], az + e2[t_idx, 2]
    s = np.sign(dd)
    qy0 = jj - ay
    qz0 = kk - az

    def _edge_ok(py, pz, ey, ez):
        ln = np.sqrt(ey * ey + ez * ez)
        return s * (ey * pz - ez * py) >= -tol * ln

    near = (
        _edge_ok(qy0, qz0, by - ay, bz - az)
        & _edge_ok(jj - by, kk - bz, cy - by, cz - bz)
        & _edge_ok(jj - cy, kk - cz, ay - cy, az - cz)
    )
    if near.any():
        u0 = (qy0 * e2[t_idx, 2] - qz0 * e2[t_idx, 1]) / dd
        v0 = (e1[t_idx, 1] * qz0 - e1[t_idx, 2] * qy0) / dd
        x0 = p0[t_idx, 0] + u0 * e1[t_idx, 0] + v0 * e2[t_idx, 0]
        x0, jn, kn = x0[near], jj[near], kk[near]
        ig = np.rint(x0).astype(np.int64)
        graze = (np.abs(x0 - ig) <= tol) & (ig >= 0) & (ig < nx)
        out[ig[graze], jn[graze] * nz + kn[graze]] = 1

    return Mask(grid, out.reshape(nx, ny, nz))


def obj_text(mesh: Mesh) -> str:
    """ASCII OBJ, vertices in mm, 1-based indices; full float64 precision."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


def write_obj(mesh: Mesh, path) -> None:
    Path(path).write_text(obj_text(mesh))


def read_obj(path) -> Mesh:
    verts = []
    faces = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0] in ("#", "vn", "vt", "o", "g", "s", "mtllib", "usemtl"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                ids = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                if len(ids) != 3:
                    raise ParseError(f"line {ln}: only triangle faces supported")
                faces.append(ids)
        except (IndexError, ValueError) as exc:
            raise ParseError(f"line {ln}: malformed OBJ entry: {line!r}") from exc
    if not verts:
        raise ParseError("no vertices in OBJ file")
    return Mesh(np.array(verts), np.array(faces))
