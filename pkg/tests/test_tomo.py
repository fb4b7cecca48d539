"""Projector geometry, adjoint exactness, noise calibration."""

import math

import numpy as np
import pytest

from buqo.grid import Image
from buqo.linops import adjoint_mismatch
from buqo.tomo import (Geometry, NoiseModel, ParallelProjector, noise_bound,
                       simulate_data)


def slow_forward(img, geom):
    """Direct-formula ray march, written independently of the kernels."""
    n = geom.side
    half = (n - 1) * 0.5
    det0 = (geom.detectors - 1) * 0.5
    out = np.zeros((geom.angles, geom.detectors))
    for a, t in enumerate(geom.angles_rad):
        ca, sa = np.cos(t), np.sin(t)
        along_rows = abs(ca) >= abs(sa)
        scale = 1.0 / max(abs(ca), abs(sa))
        step = -sa / ca if along_rows else -ca / sa
        for d in range(geom.detectors):
            s = (d - det0) * geom.detector_spacing
            jf = ((s + half * sa) / ca if along_rows
                  else (s + half * ca) / sa) + half
            acc = 0.0
            for k in range(n):
                j0 = int(np.floor(jf))
                w = jf - j0
                if 0 <= j0 < n:
                    acc += (img[k, j0] if along_rows else img[j0, k]) \
                        * (1 - w)
                if 0 <= j0 + 1 < n:
                    acc += (img[k, j0 + 1] if along_rows
                            else img[j0 + 1, k]) * w
                jf += step
            out[a, d] = acc * scale
    return out.ravel()


@pytest.mark.parametrize("n,na,nd", [(4, 6, 7), (8, 5, 12), (16, 12, 23),
                                     (9, 7, 13)])
def test_forward_matches_direct_formula(n, na, nd):
    geom = Geometry(side=n, angles=na, detectors=nd)
    op = ParallelProjector(geom)
    rng = np.random.default_rng(7)
    for _ in range(2):
        img = rng.normal(size=(n, n))
        got = op.apply(img.ravel())
        want = slow_forward(img, geom)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)


@pytest.mark.parametrize("n,na,nd", [(8, 12, 8), (16, 7, 30), (32, 24, 46),
                                     (13, 11, 19), (2, 3, 5)])
def test_projector_adjoint_is_exact(n, na, nd):
    op = ParallelProjector(Geometry(side=n, angles=na, detectors=nd))
    rng = np.random.default_rng(1)
    worst = max(adjoint_mismatch(op, rng) for _ in range(10))
    assert worst < 1e-12


def test_geometry_defaults_and_validation():
    g = Geometry(side=64, angles=90, detectors=128)
    assert g.detector_spacing == pytest.approx(64 * math.sqrt(2) / 128)
    assert g.data_size == 90 * 128
    np.testing.assert_allclose(g.angles_rad,
                               np.arange(90) * math.pi / 90)
    with pytest.raises(ValueError):
        Geometry(side=0, angles=1, detectors=1)


def test_projection_conserves_mass():
    # integrating the sinogram over the detector axis recovers the image
    # integral at every angle (Fubini), up to interpolation error
    n = 32
    geom = Geometry(side=n, angles=16, detectors=64)
    rng = np.random.default_rng(2)
    img = rng.random((n, n))
    sino = ParallelProjector(geom).apply(img.ravel())
    total = img.sum()
    per_angle = sino.reshape(16, 64).sum(axis=1) * geom.detector_spacing
    np.testing.assert_allclose(per_angle, total, rtol=2e-2)


def test_projection_of_centered_disk_is_symmetric():
    n = 64
    geom = Geometry(side=n, angles=12, detectors=65)
    c = (n - 1) / 2
    ii, jj = np.indices((n, n))
    disk = ((ii - c) ** 2 + (jj - c) ** 2 <= (n / 4) ** 2).astype(float)
    sino = ParallelProjector(geom).apply(disk.ravel()).reshape(12, 65)
    # detector flip symmetry at every angle (disk is centrally symmetric)
    np.testing.assert_allclose(sino, sino[:, ::-1], atol=1e-9)
    # rotation invariance: every angle sees the same profile
    for a in range(1, 12):
        np.testing.assert_allclose(sino[a], sino[0], atol=0.25 * sino.max(),
                                   rtol=0)


def test_project_image_wrapper():
    geom = Geometry(side=8, angles=3, detectors=11)
    op = ParallelProjector(geom)
    out = op.project_image(Image.from_grid(np.ones((8, 8))))
    assert (out.angles, out.detectors) == (3, 11)
    with pytest.raises(ValueError):
        op.project_image(Image.from_grid(np.ones((4, 4))))


# -- noise calibration --------------------------------------------------------


def test_noise_bound_formula():
    m = 10_000
    assert noise_bound(1.0, m) == pytest.approx(
        math.sqrt(m + 2 * math.sqrt(2 * m)), rel=1e-15)
    assert noise_bound(1.0, m) == pytest.approx(101.40, abs=5e-3)
    assert noise_bound(2.5, m) == pytest.approx(2.5 * noise_bound(1.0, m))


def test_noise_bound_coverage_matches_chi_tail():
    # exact chi-distribution value frozen from an independent calculation
    m = 8100
    expect = 0.9764082235212312
    rng = np.random.default_rng(3)
    trials = 2000
    norms = np.linalg.norm(rng.normal(0.0, 1.0, (trials, m)), axis=1)
    frac = float(np.mean(norms <= noise_bound(1.0, m)))
    assert abs(frac - expect) < 0.013  # ~3.5 sigma of the MC error


def test_simulate_clean_when_noiseless():
    geom = Geometry(side=16, angles=10, detectors=24)
    img = Image.from_grid(np.random.default_rng(4).random((16, 16)))
    sim = simulate_data(geom, NoiseModel(0.0), img)
    assert sim.epsilon == 0.0
    np.testing.assert_array_equal(sim.y.values, sim.clean.values)


def test_simulate_calibration_and_determinism():
    geom = Geometry(side=16, angles=10, detectors=24)
    img = Image.from_grid(np.random.default_rng(5).random((16, 16)))
    a = simulate_data(geom, NoiseModel(0.05, seed=11), img)
    b = simulate_data(geom, NoiseModel(0.05, seed=11), img)
    np.testing.assert_array_equal(a.y.values, b.y.values)
    assert a.epsilon == b.epsilon
    # epsilon comes from sigma_abs = sigma_rel * max(clean data)
    sig = 0.05 * a.clean.values.max()
    assert a.sigma_abs == pytest.approx(sig)
    assert a.epsilon == pytest.approx(noise_bound(sig, a.clean.size))
    # different seed, different noise
    c = simulate_data(geom, NoiseModel(0.05, seed=12), img)
    assert not np.array_equal(a.y.values, c.y.values)


def test_noise_model_rejects_negative():
    with pytest.raises(ValueError):
        NoiseModel(-0.1)
