"""Affine registration tests on analytic fields with known ground-truth warps.

Fixtures evaluate a closed-form ellipsoid pseudo-distance field at transformed
world coordinates, so the synthesized pair (moving, fixed) is an exact warp of
itself with no resampling error and the recovered transform can be compared
against the synthesizing one directly.
"""

import numpy as np
import pytest

from ctseg.errors import DegenerateInputError, OrientationError, RegistrationError
from ctseg.grid import DistanceMap, Grid
from ctseg.register import AffineTransform, apply_transform, register_affine

from conftest import make_grid, voxel_centers_mm

RADII = np.array([22.0, 16.0, 12.0])
CENTER = np.array([2.0, -3.0, 4.0])


def _centered_grid(n=40, spacing=2.0):
    half = n * spacing / 2.0
    return make_grid(n, spacing, origin=(-half + spacing / 2.0,) * 3)


def _field(grid, transform=None):
    """Inside-positive clamped ellipsoid field, optionally pre-warped so that
    field(x) = q(transform^-1 x)."""
    pts = voxel_centers_mm(grid).reshape(-1, 3)
    if transform is not None:
        pts = transform.inverse().apply(pts)
    q = (pts - CENTER) / RADII
    d = (1.0 - np.sqrt((q * q).sum(axis=-1))) * RADII.min()
    vals = np.clip(d, -25.0, 25.0).reshape(grid.dims)
    return DistanceMap(grid, vals.astype(np.float32))


def _msd(a: DistanceMap, b: DistanceMap) -> float:
    diff = a.voxels.astype(np.float64) - b.voxels.astype(np.float64)
    return float(np.mean(diff * diff))


class TestAffineTransform:
    def test_identity_apply_is_noop(self):
        pts = np.array([[1.0, -2.0, 3.0], [0.0, 0.0, 0.0]])
        assert np.allclose(AffineTransform.identity().apply(pts), pts)

    def test_inverse_round_trip(self):
        t = AffineTransform(
            np.array([[1.1, 0.05, 0.0], [0.0, 0.9, 0.02], [-0.03, 0.0, 1.0]]),
            np.array([4.0, -2.0, 7.0]),
        )
        pts = np.random.default_rng(3).normal(size=(50, 3)) * 30.0
        assert np.allclose(t.inverse().apply(t.apply(pts)), pts, atol=1e-9)

    def test_singular_matrix_rejected(self):
        m = np.eye(3)
        m[2, 2] = 0.0
        with pytest.raises(DegenerateInputError):
            AffineTransform(m, np.zeros(3))


class TestApplyTransform:
    def test_identity_reproduces_map(self):
        f = _field(_centered_grid())
        out = apply_transform(f, AffineTransform.identity(), f.grid)
        assert np.allclose(out.voxels, f.voxels, atol=1e-4)

    def test_translation_shifts_one_voxel(self):
        # out(x) = moving(x - d): a +2 mm x-shift moves content up one voxel
        f = _field(_centered_grid())
        t = AffineTransform(np.eye(3), np.array([2.0, 0.0, 0.0]))
        out = apply_transform(f, t, f.grid)
        assert np.allclose(out.voxels[1:], f.voxels[:-1], atol=1e-4)


class TestRegisterAffine:
    def test_identity_fixed_point(self):
        f = _field(_centered_grid())
        t = register_affine(f, f)
        assert np.abs(t.translation).max() <= 0.5
        assert np.abs(t.matrix - np.eye(3)).max() <= 1e-2

    def test_translation_recovered(self):
        g = _centered_grid()
        true = AffineTransform(np.eye(3), np.array([10.0, -6.0, 4.0]))
        t = register_affine(_field(g), _field(g, true))
        assert np.abs(t.translation - true.translation).max() <= 1.0

    def test_isotropic_scale_recovered(self):
        g = _centered_grid()
        true = AffineTransform(1.1 * np.eye(3), np.zeros(3))
        t = register_affine(_field(g), _field(g, true))
        d = np.diag(t.matrix)
        assert np.abs(d / 1.1 - 1.0).max() <= 0.02
        # small rotations are near-degenerate for an ellipsoid, so only a
        # loose bound is meaningful off the diagonal
        assert np.abs(t.matrix - np.diag(d)).max() <= 0.06
        assert np.abs(t.translation).max() <= 2.0

    @pytest.mark.parametrize(
        "matrix,translation",
        [
            (np.eye(3), (10.0, -6.0, 4.0)),
            (1.1 * np.eye(3), (0.0, 0.0, 0.0)),
            (
                np.array([[1.05, 0.03, 0.0], [0.0, 0.95, -0.02], [0.01, 0.0, 1.02]]),
                (4.0, 3.0, -5.0),
            ),
        ],
    )
    def test_residual_drops_ninety_percent(self, matrix, translation):
        g = _centered_grid()
        moving = _field(g)
        fixed = _field(g, AffineTransform(np.asarray(matrix), np.asarray(translation)))
        t = register_affine(moving, fixed)
        after = _msd(apply_transform(moving, t, g), fixed)
        before = _msd(moving, fixed)
        assert after <= 0.1 * before

    def test_uniform_map_rejected(self):
        g = _centered_grid(16, 2.0)
        flat = DistanceMap(g, np.zeros(g.dims, dtype=np.float32))
        f = _field(g)
        with pytest.raises(DegenerateInputError):
            register_affine(flat, f)
        with pytest.raises(DegenerateInputError):
            register_affine(f, flat)

    def test_non_rai_orientation_rejected(self):
        g = _centered_grid(16, 2.0)
        flipped = Grid(g.dims, g.spacing, g.origin, ((-1, 0, 0), (0, 1, 0), (0, 0, 1)))
        f = _field(g)
        bad = DistanceMap(flipped, np.array(f.voxels))
        with pytest.raises(OrientationError):
            register_affine(bad, f)
        with pytest.raises(OrientationError):
            register_affine(f, bad)

    def test_non_finite_map_raises(self):
        g = _centered_grid(16, 2.0)
        vox = np.array(_field(g).voxels)
        vox[5, 5, 5] = np.nan
        with pytest.raises(RegistrationError):
            register_affine(DistanceMap(g, vox), _field(g))

    def test_deterministic(self):
        g = _centered_grid()
        true = AffineTransform(np.eye(3), np.array([10.0, -6.0, 4.0]))
        moving, fixed = _field(g), _field(g, true)
        a = register_affine(moving, fixed)
        b = register_affine(moving, fixed)
        assert np.array_equal(a.matrix, b.matrix)
        assert np.array_equal(a.translation, b.translation)
