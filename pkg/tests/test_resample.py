import numpy as np
import pytest

from conftest import make_grid, ramp_volume, voxel_centers_mm
from ctseg.errors import OrientationError
from ctseg.grid import Grid, Mask, Volume
from ctseg.resample import reorient_rai, resample, resample_mask_to_grid


def test_reorient_identity_is_noop():
    g = make_grid(4)
    v = Volume(g, np.arange(64, dtype=np.float32).reshape(4, 4, 4))
    out = reorient_rai(v)
    assert out.grid.same_geometry(g)
    assert (out.voxels == v.voxels).all()


@pytest.mark.parametrize(
    "direction",
    [
        ((-1, 0, 0), (0, -1, 0), (0, 0, 1)),  # flipped x/y
        ((0, 1, 0), (1, 0, 0), (0, 0, -1)),  # swapped x/y, flipped z
        ((0, 0, 1), (1, 0, 0), (0, 1, 0)),  # cyclic permutation
    ],
)
def test_reorient_preserves_world_coordinates(direction):
    rng = np.random.default_rng(11)
    g = Grid((4, 5, 6), (1.0, 2.0, 0.5), (7.0, -3.0, 2.0), direction)
    v = Volume(g, rng.normal(size=(4, 5, 6)).astype(np.float32))
    out = reorient_rai(v)

    assert out.grid.is_identity_direction(tol=1e-12)
    # every output voxel must carry the value of the input voxel at the same
    # world position
    centers = voxel_centers_mm(out.grid).reshape(-1, 3)
    src_idx = np.round(g.world_to_index(centers)).astype(int)
    assert (np.abs(g.world_to_index(centers) - src_idx) < 1e-6).all()
    expected = v.voxels[src_idx[:, 0], src_idx[:, 1], src_idx[:, 2]]
    assert (out.voxels.reshape(-1) == expected).all()


def test_reorient_rejects_oblique():
    a = np.deg2rad(10.0)
    d = (
        (np.cos(a), -np.sin(a), 0.0),
        (np.sin(a), np.cos(a), 0.0),
        (0.0, 0.0, 1.0),
    )
    g = Grid((4, 4, 4), (1.0, 1.0, 1.0), direction=d)
    v = Volume(g, np.zeros((4, 4, 4), dtype=np.float32))
    with pytest.raises(OrientationError):
        reorient_rai(v)


def test_downsample_dims_rule():
    g = make_grid(128, spacing=1.0)
    v = Volume(g, np.zeros((128,) * 3, dtype=np.float32))
    out = resample(v, 3.0, method="down")
    assert out.grid.dims == (43, 43, 43)  # round(128/3)
    assert out.grid.spacing == (3.0, 3.0, 3.0)


def test_resample_min_one_voxel():
    g = make_grid((2, 8, 8), spacing=1.0)
    v = Volume(g, np.zeros((2, 8, 8), dtype=np.float32))
    out = resample(v, 10.0, method="down")
    assert out.grid.dims == (1, 1, 1)


@pytest.mark.parametrize("method", ["down", "iso"])
def test_constant_volume_unchanged(method):
    g = make_grid(24, spacing=1.0)
    v = Volume(g, np.full((24,) * 3, -700.0, dtype=np.float32))
    out = resample(v, 3.0 if method == "down" else 0.8, method=method)
    assert (out.voxels == -700.0).all()


@pytest.mark.parametrize("method,target", [("down", 3.0), ("iso", 0.7)])
def test_linear_ramp_reproduced(method, target):
    # both kernels are exact on linear fields away from the clamped border
    g = make_grid(30, spacing=1.0)
    v = ramp_volume(g)
    out = resample(v, target, method=method)
    expected = voxel_centers_mm(out.grid) @ np.array([0.7, -0.3, 0.2]) - 500.0
    interior = (slice(3, -3),) * 3
    err = np.abs(out.voxels[interior] - expected[interior].astype(np.float32))
    assert err.max() < 1e-4


def test_resample_preserves_outer_extent():
    g = make_grid(30, spacing=1.0, origin=(5.0, 5.0, 5.0))
    v = Volume(g, np.zeros((30,) * 3, dtype=np.float32))
    out = resample(v, 3.0, method="down")
    # edge of first voxel: origin - spacing/2 must be unchanged
    in_edge = np.asarray(g.origin) - np.asarray(g.spacing) / 2
    out_edge = np.asarray(out.grid.origin) - np.asarray(out.grid.spacing) / 2
    assert np.allclose(in_edge, out_edge, atol=1e-12)


def test_mask_resample_nearest():
    g = make_grid(16, spacing=1.0)
    vox = np.zeros((16,) * 3, dtype=np.uint8)
    vox[4:12, 4:12, 4:12] = 1
    m = Mask(g, vox)
    out = resample(m, 2.0, method="iso")
    assert out.grid.dims == (8, 8, 8)
    assert set(np.unique(out.voxels)) <= {0, 1}
    assert out.voxels.sum() == 4 * 4 * 4


def test_resample_mask_to_grid_round_trip():
    g = make_grid(16, spacing=1.0)
    vox = np.zeros((16,) * 3, dtype=np.uint8)
    vox[5:11, 3:13, 6:10] = 1
    m = Mask(g, vox)
    out = resample_mask_to_grid(m, g)
    assert (out.voxels == vox).all()
