"""Phantom construction, rendering, and structure masks."""

import numpy as np
import pytest

from buqo.phantom import (Blob, Ellipse, Phantom, disk_mask, load_phantom,
                          pe_phantom, render_phantom, save_phantom,
                          structure_mask)


def test_render_range_and_shape():
    img = render_phantom(pe_phantom(64))
    assert (img.height, img.width) == (64, 64)
    assert img.values.min() >= 0.0
    assert img.values.max() <= 1.0
    assert img.values.max() > 0.5  # vessel is bright


def test_blob_overwrites_vessel():
    ph = pe_phantom(64)
    with_blob = render_phantom(ph).values
    without = render_phantom(ph.without_blob()).values
    mask = structure_mask(ph).membership
    # inside the blob the intensity is exactly the blob level
    np.testing.assert_allclose(with_blob[mask], ph.blob.intensity)
    # outside it the two renders agree exactly
    np.testing.assert_array_equal(with_blob[~mask], without[~mask])
    # and the blob is darker than the vessel it occludes
    assert without[mask].min() > with_blob[mask].max()


def test_artifact_free_flag_equals_without_blob():
    a = render_phantom(pe_phantom(32, artifact_free=True))
    b = render_phantom(pe_phantom(32).without_blob())
    np.testing.assert_array_equal(a.values, b.values)


def test_structure_mask_is_the_blob_disk():
    ph = pe_phantom(64)
    m = structure_mask(ph)
    d = disk_mask(64, ph.blob.center, ph.blob.radius)
    np.testing.assert_array_equal(m.membership, d.membership)
    assert 0 < m.cardinality < m.size


def test_structure_mask_requires_blob():
    ph = Phantom(16, (Ellipse((0.5, 0.5), (0.3, 0.3), 0.0, 0.5),))
    with pytest.raises(ValueError):
        structure_mask(ph)


def test_disk_mask_empty_raises():
    with pytest.raises(ValueError):
        disk_mask(8, (0.5, 0.5), 1e-6)


def test_ellipse_outside_grid_rejected():
    ph = Phantom(16, (Ellipse((0.9, 0.5), (0.3, 0.1), 0.0, 0.5),))
    with pytest.raises(ValueError):
        render_phantom(ph)


def test_save_load_round_trip(tmp_path):
    ph = pe_phantom(32)
    save_phantom(tmp_path / "ph.json", ph)
    back = load_phantom(tmp_path / "ph.json")
    assert back == ph
    np.testing.assert_array_equal(render_phantom(back).values,
                                  render_phantom(ph).values)


def test_save_load_handles_missing_blob(tmp_path):
    ph = Phantom(16, (Ellipse((0.5, 0.5), (0.2, 0.2), 0.0, 0.5),), None)
    save_phantom(tmp_path / "nb.json", ph)
    assert load_phantom(tmp_path / "nb.json") == ph


def test_default_blob_neighborhood_inside_vessel():
    # the ring around the blob must sample vessel pixels, not cavity air;
    # check a 3-pixel dilation ring stays strictly brighter than body tissue
    side = 128
    ph = pe_phantom(side)
    clean = render_phantom(ph.without_blob()).values.reshape(side, side)
    m = structure_mask(ph).membership.reshape(side, side)
    grown = m.copy()
    for _ in range(3):
        g = grown.copy()
        g[1:, :] |= grown[:-1, :]
        g[:-1, :] |= grown[1:, :]
        g[:, 1:] |= grown[:, :-1]
        g[:, :-1] |= grown[:, 1:]
        grown = g
    ring = grown & ~m
    assert clean[ring].min() > 0.5


def test_blob_is_modestly_sized():
    ph = pe_phantom(128)
    frac = structure_mask(ph).cardinality / (128 * 128)
    assert 0.002 < frac < 0.02
