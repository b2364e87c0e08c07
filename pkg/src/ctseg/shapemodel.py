"""Statistical shape models of lungs and model-guided segmentation.

A model is the voxel-wise mean of co-registered signed distance maps plus
orthonormal PCA modes (computed through the small N x N Gram matrix, never
the voxel-count covariance). Segmentation registers the model mean onto a
coarse lung-field estimate, then evolves a level set whose speed blends the
threshold term with a pull toward the fitted model field, which is how
dense pathology outside the HU range is still captured.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .distance import signed_distance
from .errors import (
    ConfigError,
    CTSegError,
    DegenerateInputError,
    GeometryError,
    ParseError,
    SeedError,
)
from .grid import DistanceMap, Mask, Volume
from .levelset import (
    LUNG_HU_RANGE,
    LevelSetParams,
    _evolve,
    lung_field_estimate,
    threshold_levelset,
)
from .mesh import extract_mesh
from .nifti import read_nifti, write_nifti
from .register import AffineTransform, apply_transform, register_affine

REFIT_EVERY = 10
SIDES = ("left", "right")

MODEL_LEVELSET = LevelSetParams(*LUNG_HU_RANGE, curvature_weight=0.3, model_weight=0.1)


@dataclass(frozen=True)
class ShapeModel:
    """Mean field plus orthonormal variation modes, eigenvalues descending.

    The convention throughout is patient-left = increasing world x.
    """

    side: str
    mean: DistanceMap
    components: tuple
    eigenvalues: np.ndarray

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigError(f"side must be one of {SIDES}, got {self.side!r}")
        comps = tuple(self.components)
        ev = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1).copy()
        if len(comps) != ev.size:
            raise ConfigError("need exactly one eigenvalue per component")
        if (ev < 0).any() or (np.diff(ev) > 1e-12).any():
            raise ConfigError("eigenvalues must be nonnegative and descending")
        for c in comps:
            if not c.grid.same_geometry(self.mean.grid):
                raise GeometryError("component grid differs from the mean grid")
        ev.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def n_modes(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class ModelFitCoefficients:
    """Per-mode weights, already clipped to the plausibility band."""

    b: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.b, dtype=np.float64).reshape(-1).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "b", arr)


def build_shape_model(training, side: str) -> ShapeModel:
    """PCA of the training maps; keeps every numerically nonzero mode (K <= N-1)."""
    training = list(training)
    if len(training) < 2:
        raise DegenerateInputError("shape model needs at least 2 training maps")
    grid = training[0].grid
    for t in training[1:]:
        if not t.grid.same_geometry(grid):
            raise GeometryError("training maps must share one grid")

    x = np.stack([t.voxels.astype(np.float64).ravel() for t in training])
    mean = x.mean(axis=0)
    x -= mean
    n = len(training)
    gram = (x @ x.T) / (n - 1)
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][: n - 1]

    comps = []
    lams = []
    top = float(evals[order[0]])
    for idx in order:
        lam = float(evals[idx])
        if lam <= 0.0 or lam <= top * 1e-10:
            break
        axis = x.T @ evecs[:, idx]
        axis /= np.linalg.norm(axis)
        comps.append(DistanceMap(grid, axis.reshape(grid.dims).astype(np.float32)))
        lams.append(lam)
    mean_map = DistanceMap(grid, mean.reshape(grid.dims).astype(np.float32))
    return ShapeModel(side, mean_map, tuple(comps), np.asarray(lams))


class _WarpedModel:
    """Model fields resampled once onto the image grid under a fixed pose.

    Warping breaks the exact orthonormality of the modes, so coefficients
    are normalized by each warped mode's squared norm; with an identity
    pose that factor is the stored norm and cancels float32 rounding.
    """

    def __init__(self, model: ShapeModel, pose: AffineTransform, grid):
        self.mean = apply_transform(model.mean, pose, grid).voxels.ravel()
        self.comps = np.stack(
            [apply_transform(c, pose, grid).voxels.ravel().astype(np.float64) for c in model.components]
        ) if model.n_modes else np.zeros((0, self.mean.size))
        self.norms = np.einsum("ij,ij->i", self.comps, self.comps)
        self.limits = 3.0 * np.sqrt(model.eigenvalues)

    def fit(self, phi_flat: np.ndarray):
        if len(self.comps) == 0:
            return self.mean.copy(), np.zeros(0)
        raw = self.comps @ (phi_flat - self.mean)
        b = np.clip(raw / np.maximum(self.norms, 1e-300), -self.limits, self.limits)
        return (self.mean + b @ self.comps).astype(np.float32), b


def fit_model(model: ShapeModel, pose: AffineTransform, phi: DistanceMap):
    """Best in-band model field for phi: returns (field, coefficients)."""
    warped = _WarpedModel(model, pose, phi.grid)
    out, b = warped.fit(phi.voxels.astype(np.float64).ravel())
    return DistanceMap(phi.grid, out.reshape(phi.grid.dims)), ModelFitCoefficients(b)


def model_levelset(
    v: Volume, model: ShapeModel, pose: AffineTransform, params: LevelSetParams = MODEL_LEVELSET
) -> DistanceMap:
    """Level-set segmentation pulled toward the posed shape model.

    Seeded by the warped mean's interior. The model field is refitted to the
    evolving front every few iterations. With model_weight 0 this is exactly
    threshold_levelset from the same seed; with a positive weight the range
    confinement is lifted: out-of-range voxels deeper inside the fitted field
    than the claim margin count as interior, so dense pathology the intensity
    range cannot see stays part of the lung.
    """
    warped = _WarpedModel(model, pose, v.grid)
    seed = warped.mean.reshape(v.grid.dims) > 0
    if params.model_weight == 0.0:
        return threshold_levelset(v, params, Mask(v.grid, seed))
    if not seed.any():
        raise SeedError("posed model mean has no interior on this grid")

    cache = {}

    def model_fn(it: int, phi3d: np.ndarray) -> np.ndarray:
        if it % REFIT_EVERY == 0 or "field" not in cache:
            field, _ = warped.fit(phi3d.astype(np.float64).ravel())
            cache["field"] = field.reshape(phi3d.shape)
        return cache["field"]

    phi = _evolve(v, seed, params, confine=False, model_fn=model_fn)
    return DistanceMap(v.grid, phi)


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except CTSegError as e:
        err = type(e)(f"{name}: {e}")
        err.stage = name
        raise err from e


def split_sides(pos: np.ndarray, dims) -> dict:
    """Partition a positive lung-field region into left/right by component
    centroid; patient-left is increasing first index on an RAI grid."""
    labels, n = ndimage.label(pos, structure=np.ones((3, 3, 3), dtype=bool))
    centroids = ndimage.center_of_mass(pos, labels, range(1, n + 1))
    mid = 0.5 * (dims[0] - 1)
    sides = {"left": np.zeros(dims, dtype=bool), "right": np.zeros(dims, dtype=bool)}
    for label, (ci, _cj, _ck) in enumerate(centroids, start=1):
        key = "left" if ci >= mid else "right"
        sides[key] |= labels == label
    return sides


def segment_lungs(v: Volume, left: ShapeModel, right: ShapeModel):
    """Full two-lung pipeline: field estimate, per-side registration, model
    level set, surface extraction. Returns (left mesh, right mesh)."""
    for side, model in (("left", left), ("right", right)):
        if model.side != side:
            raise ConfigError(f"{side} model argument has side {model.side!r}")

    field = _stage("lung_field", lung_field_estimate, v)
    sides = split_sides(field.voxels > 0, v.grid.dims)

    out = []
    for side, model in (("left", left), ("right", right)):
        mask = sides[side]
        if not mask.any():
            err = SeedError(f"lung_split: no {side}-side lung field component")
            err.stage = "lung_split"
            raise err
        fixed = signed_distance(Mask(v.grid, mask))
        pose = _stage(f"register_{side}", register_affine, model.mean, fixed)
        phi = _stage(f"model_levelset_{side}", model_levelset, v, model, pose, MODEL_LEVELSET)
        out.append(_stage(f"mesh_{side}", extract_mesh, phi))
    return out[0], out[1]


def save_shape_model(model: ShapeModel, path) -> None:
    """Persist as a directory: mean.nii.gz, comp_000.nii.gz ..., manifest.txt."""
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    write_nifti(model.mean, p / "mean.nii.gz")
    for i, comp in enumerate(model.components):
        write_nifti(comp, p / f"comp_{i:03d}.nii.gz")
    ev = ",".join(repr(float(x)) for x in model.eigenvalues)
    text = f"side={model.side}\nK={model.n_modes}\neigenvalues={ev}\n"
    (p / "manifest.txt").write_text(text)


def load_shape_model(path) -> ShapeModel:
    p = Path(path)
    manifest = p / "manifest.txt"
    if not manifest.is_file():
        raise ParseError(f"{manifest}: missing shape-model manifest")
    kv = {}
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"{manifest}: malformed line {line!r}")
        kv[key.strip()] = value.strip()
    for key in ("side", "K", "eigenvalues"):
        if key not in kv:
            raise ParseError(f"{manifest}: missing key {key!r}")
    try:
        k = int(kv["K"])
        ev = (
            np.array([float(tok) for tok in kv["eigenvalues"].split(",")])
            if kv["eigenvalues"]
            else np.zeros(0)
        )
    except ValueError as e:
        raise ParseError(f"{manifest}: {e}") from e

    mean = read_nifti(p / "mean.nii.gz", kind="distance")
    comps = []
    for i in range(k):
        f = p / f"comp_{i:03d}.nii.gz"
        if not f.is_file():
            raise ParseError(f"{f}: missing component file")
        comps.append(read_nifti(f, kind="distance"))
    return ShapeModel(kv["side"], mean, tuple(comps), ev)
