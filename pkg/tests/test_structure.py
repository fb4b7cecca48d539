"""Structure-free set: neighborhood statistics, membership, projection."""

import numpy as np
import pytest

from buqo.grid import Image, Mask
from buqo.mapsolver import SolverConfig
from buqo.phantom import disk_mask
from buqo.structure import (NeighborhoodStats, StructureSetParams,
                            membership, project_onto_S, residuals_of,
                            sample_neighborhood)


def center_mask(side):
    m = np.zeros((side, side), bool)
    m[side // 2, side // 2] = True
    return Mask.from_grid(m)


def test_constant_image_stats_hit_the_floors():
    img = Image.from_grid(np.full((9, 9), 2.0))
    stats = sample_neighborhood(img, center_mask(9), ring_width=1)
    assert stats.mu_pix == 2.0
    assert stats.r_pix == pytest.approx(0.02)   # 1% of the peak
    assert stats.mu_grad == 0.0
    assert stats.r_grad == pytest.approx(0.01)  # 0.5% of the peak
    assert stats.intensities.size == 8          # 3x3 ring minus center
    assert stats.gradient_samples.size == 16


def test_ring_size_grows_with_width():
    img = Image.from_grid(np.ones((11, 11)))
    s2 = sample_neighborhood(img, center_mask(11), ring_width=2)
    assert s2.intensities.size == 24            # 5x5 minus center


def test_known_ring_percentiles():
    side = 7
    grid = np.zeros((side, side))
    vals = np.arange(1.0, 9.0)  # 1..8 on the 8 ring pixels
    k = 0
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if (di, dj) == (0, 0):
                continue
            grid[3 + di, 3 + dj] = vals[k]
            k += 1
    stats = sample_neighborhood(Image.from_grid(grid), center_mask(side),
                                ring_width=1)
    assert stats.mu_pix == pytest.approx(np.median(vals))          # 4.5
    spread = max(np.percentile(vals, 60) - 4.5,
                 4.5 - np.percentile(vals, 40))                    # 0.7
    assert stats.r_pix == pytest.approx(spread)


def test_sampling_validation():
    img = Image.from_grid(np.ones((8, 8)))
    with pytest.raises(ValueError):
        sample_neighborhood(img, center_mask(9))       # size mismatch
    with pytest.raises(ValueError):
        sample_neighborhood(img, center_mask(8), ring_width=0)
    full = Mask.from_grid(np.ones((8, 8), bool))
    with pytest.raises(ValueError):
        sample_neighborhood(img, full)                 # no ring left


def test_stats_radii_must_be_positive():
    with pytest.raises(ValueError):
        NeighborhoodStats(np.ones(3), np.ones(6), 1.0, 0.0, 0.0, 1.0)


def _toy_params(side=16, slope=0.01):
    # gently tilted background with a bright bump inside the probe disk;
    # the tilt must stay well below the gradient-ball floor or the set
    # loses its interior (see the empty-set test below)
    yy, xx = np.indices((side, side)) / side
    background = 0.4 + slope * xx + 0.5 * slope * yy
    mask = disk_mask(side, (0.5, 0.5), 0.15)
    img = background.copy()
    img.ravel()[mask.indices()] += 0.5
    image = Image.from_grid(img)
    stats = sample_neighborhood(image, mask, ring_width=2)
    return StructureSetParams(mask=mask, stats=stats), image


def test_membership_and_residuals():
    params, img = _toy_params()
    ok, res = membership(params, img.values)
    assert not ok                      # the bump violates the energy ball
    assert res["energy"] > 0.0
    assert res["nonneg"] == 0.0
    # replacing the masked pixels with the ring median gives a member
    fixed = img.values.copy()
    fixed[params.mask.indices()] = params.stats.mu_pix
    okf, resf = membership(params, fixed)
    assert resf["energy"] == 0.0
    bad = img.values.copy()
    bad[0] = -0.5
    assert residuals_of(params, bad)["nonneg"] == pytest.approx(0.5)


def test_projection_removes_the_structure():
    params, img = _toy_params()
    out = project_onto_S(params, img.values)
    assert out.converged
    ok, res = membership(params, out.x, rtol=1e-4)
    assert ok, res
    assert out.x.min() >= 0.0
    # projection only changes pixels the constraints can see: the mask
    # and the gradient stencils that straddle its boundary
    untouched = np.ones(img.size, bool)
    grid = params.mask.grid
    near = np.zeros_like(grid)
    near |= grid
    near[:-1, :] |= grid[1:, :]
    near[1:, :] |= grid[:-1, :]
    near[:, :-1] |= grid[:, 1:]
    near[:, 1:] |= grid[:, :-1]
    untouched &= ~near.ravel()
    np.testing.assert_allclose(out.x[untouched], img.values[untouched],
                               atol=1e-9)
    # and it actually moved the masked values toward the ring level
    moved = np.abs(out.x - img.values)[params.mask.indices()]
    assert moved.max() > 0.2


def test_projection_is_idempotent():
    params, img = _toy_params()
    cfg = SolverConfig()
    once = project_onto_S(params, img.values, cfg)
    twice = project_onto_S(params, once.x, cfg)
    assert twice.converged
    gap = np.linalg.norm(twice.x - once.x) / np.linalg.norm(once.x)
    assert gap <= 2 * cfg.rel_tol


def test_projection_identity_on_members():
    # a constant image sits at the center of both balls sampled from it
    side = 12
    img = Image.from_grid(np.full((side, side), 0.8))
    mask = disk_mask(side, (0.5, 0.5), 0.2)
    params = StructureSetParams(
        mask=mask, stats=sample_neighborhood(img, mask, ring_width=2))
    assert membership(params, img.values)[0]
    out = project_onto_S(params, img.values)
    np.testing.assert_allclose(out.x, img.values, atol=1e-6)


def test_projection_is_nonexpansive():
    params, img = _toy_params()
    rng = np.random.default_rng(0)
    x1 = img.values
    x2 = img.values + rng.normal(0, 0.05, img.size)
    p1 = project_onto_S(params, x1)
    p2 = project_onto_S(params, x2)
    assert p1.converged and p2.converged
    lhs = np.linalg.norm(p1.x - p2.x)
    rhs = np.linalg.norm(x1 - x2)
    assert lhs <= rhs * (1 + 1e-3) + 1e-6


def test_set_is_convex_along_chords():
    params, img = _toy_params()
    rng = np.random.default_rng(1)
    p = project_onto_S(params, img.values).x
    q = project_onto_S(params,
                       img.values + rng.normal(0, 0.1, img.size)).x
    for lam in (0.25, 0.5, 0.75):
        mix = lam * p + (1 - lam) * q
        ok, res = membership(params, mix, rtol=2e-4)
        assert ok, (lam, res)


def test_projection_input_validation():
    params, _ = _toy_params()
    with pytest.raises(ValueError):
        project_onto_S(params, np.ones(7))


def test_incompatible_balls_reported_as_not_converged():
    # a steep background pushes the ring's typical gradient far above
    # what near-constant masked values can produce, so the two balls
    # cannot hold at once; the projection must say so instead of
    # claiming membership
    params, img = _toy_params(slope=0.1)
    out = project_onto_S(params, img.values,
                         SolverConfig(max_iters=1500))
    assert not out.converged
    assert out.residuals["smooth"] > 1e-3
    ok, _ = membership(params, out.x)
    assert not ok
