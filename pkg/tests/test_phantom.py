import numpy as np
from scipy import ndimage

from ctseg.phantom import (
    AIR_HU,
    BODY_HU,
    CONSOLIDATION_HU,
    GGO_HU,
    LUNG_HU,
    make_lung_phantom,
    phantom_models,
    training_maps,
)


def test_plain_phantom_hu_palette():
    ph = make_lung_phantom(n=64, spacing=2.0)
    values = np.unique(ph.volume.voxels)
    assert set(values.tolist()) == {AIR_HU, BODY_HU, LUNG_HU}
    assert ph.ggo is None and ph.consolidation is None


def test_lesion_phantom_hu_palette():
    ph = make_lung_phantom(n=64, spacing=2.0, with_lesions=True)
    values = set(np.unique(ph.volume.voxels).tolist())
    assert values == {AIR_HU, BODY_HU, LUNG_HU, GGO_HU, CONSOLIDATION_HU}


def test_lungs_disjoint_and_sided():
    ph = make_lung_phantom(n=64, spacing=2.0)
    left = ph.left.bool_voxels
    right = ph.right.bool_voxels
    assert not (left & right).any()
    g = ph.volume.grid
    lc = g.index_to_world(np.array(ndimage.center_of_mass(left)))
    rc = g.index_to_world(np.array(ndimage.center_of_mass(right)))
    assert lc[0] > 0.0 > rc[0]


def test_lung_volumes_match_ellipsoid_formula():
    # voxelized ellipsoid volume converges on 4/3 pi abc
    ph = make_lung_phantom(n=128, spacing=1.0)
    for mask, axes in ((ph.left, ph.left_semi_axes), (ph.right, ph.right_semi_axes)):
        want = 4.0 / 3.0 * np.pi * axes[0] * axes[1] * axes[2]
        got = mask.bool_voxels.sum() * 1.0
        assert abs(got - want) / want < 0.02


def test_lesions_sit_inside_lungs():
    ph = make_lung_phantom(n=128, spacing=1.0, with_lesions=True)
    assert ph.ggo.bool_voxels.any()
    assert not (ph.ggo.bool_voxels & ~ph.left.bool_voxels).any()
    cons = ph.consolidation.bool_voxels
    assert cons.any()
    assert not (cons & ~ph.right.bool_voxels).any()
    # the consolidation ball is clipped by the lung wall: it must touch it
    grown = ndimage.binary_dilation(cons)
    assert (grown & ~ph.right.bool_voxels).any()


def test_volume_hu_consistent_with_masks():
    ph = make_lung_phantom(n=64, spacing=2.0, with_lesions=True)
    v = ph.volume.voxels
    assert (v[ph.ggo.bool_voxels] == GGO_HU).all()
    assert (v[ph.consolidation.bool_voxels] == CONSOLIDATION_HU).all()
    plain_lung = ph.left.bool_voxels | ph.right.bool_voxels
    plain_lung &= ~(ph.ggo.bool_voxels | ph.consolidation.bool_voxels)
    assert (v[plain_lung] == LUNG_HU).all()


def test_phantom_deterministic():
    a = make_lung_phantom(n=48, spacing=2.0, with_lesions=True)
    b = make_lung_phantom(n=48, spacing=2.0, with_lesions=True)
    assert np.array_equal(a.volume.voxels, b.volume.voxels)
    assert np.array_equal(a.left.voxels, b.left.voxels)


def test_phantom_scales_with_extent():
    # same world extent from different samplings gives matching world centroids
    a = make_lung_phantom(n=64, spacing=2.0)
    b = make_lung_phantom(n=128, spacing=1.0)
    ca = a.volume.grid.index_to_world(np.array(ndimage.center_of_mass(a.left.bool_voxels)))
    cb = b.volume.grid.index_to_world(np.array(ndimage.center_of_mass(b.left.bool_voxels)))
    assert np.abs(ca - cb).max() < 1.5


def test_training_maps_vary_and_share_grid():
    maps = training_maps("left", count=5)
    assert len(maps) == 5
    g = maps[0].grid
    assert all(m.grid.same_geometry(g) for m in maps)
    interiors = [int((m.voxels > 0).sum()) for m in maps]
    assert len(set(interiors)) > 1


def test_phantom_models_sides():
    left, right = phantom_models()
    assert left.side == "left" and right.side == "right"
    assert left.n_modes >= 1 and right.n_modes >= 1
    assert (left.mean.voxels > 0).any()
