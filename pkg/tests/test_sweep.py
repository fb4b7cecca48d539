"""Tests for the grid sweep driver: spec parsing, a real two-mask run on
a scaled-down scene, failure handling, the CSV/JSON/image outputs, and
byte-level determinism of the table."""

import json
import math

import numpy as np
import pytest

from buqo.grid import load_rawj, save_mask_pgm
from buqo.mapsolver import SolverConfig
from buqo.phantom import disk_mask, pe_phantom, save_phantom, structure_mask
from buqo.sweep import (CSV_HEADER, SweepRow, SweepSpec, emit_outputs,
                        load_sweep_spec, rows_to_csv, run_sweep)

SIDE = 32


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    """Scaled-down phantom plus two probe masks on disk."""
    d = tmp_path_factory.mktemp("scene")
    ph = pe_phantom(SIDE)
    save_phantom(d / "phantom.json", ph)
    save_mask_pgm(d / "blob.pgm", structure_mask(ph))
    save_mask_pgm(d / "flat.pgm", disk_mask(SIDE, (0.28, 0.72), 0.05))
    return d


def _tiny_spec(scene_dir, **overrides):
    kwargs = dict(
        phantom_path=str(scene_dir / "phantom.json"),
        masks=(("blob", str(scene_dir / "blob.pgm")),
               ("flat", str(scene_dir / "flat.pgm"))),
        angle_counts=(24,), sigma_rels=(0.05,), detectors=46,
        solver=SolverConfig(max_iters=8000, relax=1.0))
    kwargs.update(overrides)
    return SweepSpec(**kwargs)


# ------------------------------------------------------------ spec I/O

def test_load_sweep_spec_resolves_relative_paths(scene_dir, tmp_path):
    doc = {
        "phantom": str(scene_dir / "phantom.json"),
        "masks": {"blob": str(scene_dir / "blob.pgm"), "flat": "flat.pgm"},
        "angles": [10, 20],
        "sigmas": [0.1],
        "detectors": 46,
        "alpha": 0.02,
        "delta": 0.005,
        "seed": 3,
        "ring_width": 2,
        "transform": "haar2",
        "solver": {"max_iters": 123},
    }
    spec_path = tmp_path / "sweep.json"
    spec_path.write_text(json.dumps(doc))
    spec = load_sweep_spec(spec_path)
    assert spec.angle_counts == (10, 20)
    assert spec.sigma_rels == (0.1,)
    assert spec.detectors == 46 and spec.seed == 3
    assert spec.alpha == 0.02 and spec.delta == 0.005
    assert spec.ring_width == 2 and spec.transform == "haar2"
    assert spec.solver.max_iters == 123
    ids = dict(spec.masks)
    assert ids["blob"] == str(scene_dir / "blob.pgm")   # absolute kept
    assert ids["flat"] == str(tmp_path / "flat.pgm")    # relative resolved


def test_load_sweep_spec_requires_phantom_and_masks(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"phantom": "x.json"}))
    with pytest.raises(ValueError, match="masks"):
        load_sweep_spec(p)


def test_sweep_spec_validation(scene_dir):
    with pytest.raises(ValueError):
        _tiny_spec(scene_dir, masks=())
    with pytest.raises(ValueError):
        _tiny_spec(scene_dir, angle_counts=(0,))
    with pytest.raises(ValueError):
        _tiny_spec(scene_dir, sigma_rels=())


# ------------------------------------------------------------ real run

@pytest.fixture(scope="module")
def small_run(scene_dir):
    spec = _tiny_spec(scene_dir)
    lines = []
    rows = run_sweep(spec, log=lines.append)
    return spec, rows, lines


def test_run_produces_one_row_per_cell_and_mask(small_run):
    _, rows, lines = small_run
    assert len(rows) == 2
    assert [r.mask_id for r in rows] == ["blob", "flat"]
    assert all(r.m_a == 24 and r.sigma_rel == 0.05 for r in rows)
    assert len(lines) == 1 and "24 angles" in lines[0]


def test_run_rows_are_well_formed(small_run):
    _, rows, _ = small_run
    for r in rows:
        assert r.map_converged and r.error == ""
        assert r.residual > 0
        assert r.decision in ("reject-H0", "cannot-reject-H0",
                              "inconclusive-not-converged")
        if r.decision != "inconclusive-not-converged":
            assert 0.0 <= r.rho <= 1.0 + 1e-6
            assert r.ratio > 0
        assert r.x_map is not None and r.x_map.size == SIDE * SIDE
        assert r.x_hat_c is not None and r.diff is not None
        assert np.all(np.isfinite(r.x_map))


def test_masks_share_one_reconstruction(small_run):
    _, rows, _ = small_run
    assert np.array_equal(rows[0].x_map, rows[1].x_map)
    assert rows[0].map_iterations == rows[1].map_iterations
    assert rows[0].residual == rows[1].residual


def test_sweep_is_deterministic(small_run):
    spec, rows, _ = small_run
    again = run_sweep(spec)
    assert rows_to_csv(again) == rows_to_csv(rows)


def test_unconverged_cells_become_inconclusive_rows(scene_dir):
    spec = _tiny_spec(scene_dir, solver=SolverConfig(max_iters=1))
    rows = run_sweep(spec)
    assert len(rows) == 2
    for r in rows:
        assert math.isnan(r.rho)
        assert r.decision == "inconclusive-not-converged"
        assert not r.map_converged
        assert r.error != ""


# ------------------------------------------------------------- outputs

def test_csv_schema_and_nan_rendering():
    rows = [
        SweepRow(m_a=50, sigma_rel=0.007, mask_id="blob",
                 rho=0.123456789012345, decision="reject-H0",
                 ratio=0.25, residual=101.4),
        SweepRow(m_a=450, sigma_rel=0.175, mask_id="flat",
                 rho=float("nan"), decision="inconclusive-not-converged",
                 ratio=float("nan"), residual=float("nan")),
    ]
    text = rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER == "M_a,sigma,mask,rho,decision,ratio,residual"
    assert lines[1] == "50,0.007,blob,0.123456789,reject-H0,0.25,101.4"
    assert lines[2] == ("450,0.175,flat,nan,inconclusive-not-converged,"
                        "nan,nan")
    assert text.endswith("\n")


def test_emit_outputs_writes_csv_summary_and_images(small_run, tmp_path):
    _, rows, _ = small_run
    paths = emit_outputs(rows, tmp_path / "out")
    csv_text = paths["csv"].read_text()
    assert csv_text.splitlines()[0] == CSV_HEADER
    assert len(csv_text.splitlines()) == len(rows) + 1

    summary = json.loads(paths["summary"].read_text())
    assert summary["rows"] == len(rows)
    assert sum(summary["decisions"].values()) == len(rows)
    assert len(summary["cells"]) == len(rows)
    # the reconstruction is shared, so its runtime is counted once
    assert summary["map_runtime_s"] == pytest.approx(
        rows[0].map_runtime_s, rel=1e-12)

    tag = "m024_s0p05_blob"
    for suffix in ("xmap", "xhatc", "diff"):
        assert (paths["images"] / f"{tag}_{suffix}.json").exists()
        assert (paths["images"] / f"{tag}_{suffix}.raw").exists()
    img = load_rawj(paths["images"] / f"{tag}_xmap.json")
    assert np.allclose(img.values, rows[0].x_map)


def test_emit_outputs_can_skip_images(small_run, tmp_path):
    _, rows, _ = small_run
    paths = emit_outputs(rows, tmp_path / "noimg", write_images=False)
    assert paths["images"] is None
    assert not (tmp_path / "noimg" / "images").exists()


def test_emit_outputs_rejects_empty_table(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs([], tmp_path / "never")
