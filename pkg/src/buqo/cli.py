"""Command line entry points.

Six subcommands mirror the pipeline stages: ``simulate`` writes a dataset
from a phantom, ``reconstruct`` solves it, ``describe-structure`` reports
the constraint parameters a mask induces, ``test`` runs the hypothesis
test against a saved reconstruction, ``sweep`` runs the full experiment
grid, and ``serve`` starts the HTTP service.

Datasets on disk are a directory holding ``meta.json`` (geometry, noise,
epsilon), ``y`` (RAWJ sinogram), ``truth`` (RAWJ image, simulations
only), and optionally ``mask.pgm`` for the phantom's structure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .grid import load_image, load_mask_pgm, load_rawj, save_mask_pgm, \
    save_rawj
from .hypotest import CredibleRegion, evaluation_ratio, run_test
from .mapsolver import MapProblem, SolverConfig, load_map_result, \
    save_map_result, solve_map
from .phantom import load_phantom, render_phantom, structure_mask
from .structure import StructureSetParams, sample_neighborhood
from .sweep import emit_outputs, load_sweep_spec, run_sweep
from .service import DEFAULT_PORT, PORT_ENV_VAR, create_app
from .tomo import Geometry, NoiseModel, ParallelProjector, simulate_data
from .transforms import make_transform

__all__ = ["main"]


def _solver_from_args(args) -> SolverConfig:
    cfg = SolverConfig()
    if getattr(args, "max_iters", None):
        cfg = replace(cfg, max_iters=args.max_iters)
    return cfg


def _load_dataset(path):
    """Dataset dir (or its meta.json) -> (meta dict, sinogram)."""
    p = Path(path)
    if p.is_file():
        p = p.parent
    meta_path = p / "meta.json"
    if not meta_path.is_file():
        raise SystemExit(f"error: {p} has no meta.json, not a dataset")
    meta = json.loads(meta_path.read_text())
    y = load_rawj(p / "y")
    return meta, y


def _operators_for(meta: dict, transform: str):
    geo = meta["geometry"]
    geom = Geometry(side=geo["side"], angles=geo["angles"],
                    detectors=geo["detectors"])
    return ParallelProjector(geom), make_transform(transform, geo["side"])


# -- simulate -----------------------------------------------------------------


def _cmd_simulate(args):
    ph = load_phantom(args.phantom)
    x_true = render_phantom(ph)
    geom = Geometry(side=ph.side, angles=args.angles,
                    detectors=args.detectors)
    sim = simulate_data(geom, NoiseModel(args.sigma, args.seed), x_true)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_rawj(out / "truth", x_true)
    save_rawj(out / "y", sim.y)
    meta = {
        "geometry": {"side": ph.side, "angles": geom.angles,
                     "detectors": geom.detectors},
        "sigma_rel": args.sigma,
        "sigma_abs": sim.sigma_abs,
        "epsilon": sim.epsilon,
        "seed": args.seed,
        "phantom": str(Path(args.phantom).resolve()),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2,
                                              sort_keys=True))
    if ph.blob is not None and not ph.artifact_free:
        save_mask_pgm(out / "mask.pgm", structure_mask(ph))
    print(f"wrote dataset to {out}: {geom.angles} angles x "
          f"{geom.detectors} detectors, sigma_abs={sim.sigma_abs:.6g}, "
          f"epsilon={sim.epsilon:.6g}")
    return 0


# -- reconstruct ---------------------------------------------------------------


def _cmd_reconstruct(args):
    meta, y = _load_dataset(args.data)
    epsilon = args.epsilon if args.epsilon is not None else meta["epsilon"]
    phi, psi = _operators_for(meta, args.psi)
    problem = MapProblem(phi=phi, psi=psi, y=y.values, epsilon=epsilon)
    side = meta["geometry"]["side"]
    cfg = _solver_from_args(args)
    result = solve_map(problem, cfg, shape=(side, side))
    save_map_result(args.out, result,
                    context={"geometry": meta["geometry"],
                             "transform": args.psi,
                             "data": str(Path(args.data).resolve())})
    status = "converged" if result.converged else "NOT converged"
    print(f"{status} in {result.iterations} iterations: "
          f"objective={result.objective:.6g}, "
          f"residual={result.residual:.6g} (epsilon {epsilon:.6g}), "
          f"wrote {args.out}")
    return 0 if result.converged else 3


# -- describe-structure ---------------------------------------------------------


def _cmd_describe_structure(args):
    img = load_image(args.image)
    mask = load_mask_pgm(args.mask)
    stats = sample_neighborhood(img, mask, args.ring_width)
    doc = {
        "mask_pixels": mask.cardinality,
        "ring_pixels": int(stats.intensities.size),
        "ring_width": args.ring_width,
        "intensity_center": stats.mu_pix,
        "intensity_radius": stats.r_pix,
        "gradient_center": stats.mu_grad,
        "gradient_radius": stats.r_grad,
    }
    if args.include_samples:
        doc["intensities"] = stats.intensities.tolist()
        doc["gradient_samples"] = stats.gradient_samples.tolist()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


# -- test -----------------------------------------------------------------------


def _cmd_test(args):
    result = load_map_result(args.map_result)
    context = (result.history or {}).get("context", {})
    meta, y = _load_dataset(args.data)
    transform = context.get("transform", "haar3")
    phi, psi = _operators_for(meta, transform)
    problem = MapProblem(phi=phi, psi=psi, y=y.values,
                         epsilon=result.epsilon)

    mask = load_mask_pgm(args.mask)
    side = meta["geometry"]["side"]
    if (mask.height, mask.width) != (side, side):
        raise SystemExit(f"error: mask is {mask.height}x{mask.width}, "
                         f"image is {side}x{side}")
    stats = sample_neighborhood(result.image, mask, args.ring_width)
    s_params = StructureSetParams(mask=mask, stats=stats)
    region = CredibleRegion.from_map(problem, result, args.alpha)
    cfg = _solver_from_args(args)
    report = run_test(result, region, s_params, args.delta, cfg)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "rho": report.rho,
        "decision": report.decision,
        "alpha": report.alpha,
        "delta": report.delta,
        "distance": report.distance,
        "denominator": report.denominator,
        "stage1_member": report.stage1_member,
        "converged": report.converged,
        "iterations": report.iterations,
        "evaluation_ratio": evaluation_ratio(report, result),
        "credible_residuals": report.credible_residuals,
        "structure_residuals": report.structure_residuals,
        "phi_forward_evals": report.phi_forward_evals,
        "phi_adjoint_evals": report.phi_adjoint_evals,
        "psi_forward_evals": report.psi_forward_evals,
        "psi_adjoint_evals": report.psi_adjoint_evals,
        "runtime_s": report.runtime_s,
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2,
                                                sort_keys=True))
    for kind in ("xmap", "xmaps", "xhatc", "xhats", "diff"):
        save_rawj(out / kind, report.image(kind))
    print(f"decision: {report.decision} (rho={report.rho:.6g}, "
          f"delta={report.delta:g}), wrote {out}")
    return 0 if report.converged else 3


# -- sweep ---------------------------------------------------------------------


def _cmd_sweep(args):
    spec = load_sweep_spec(args.spec)
    log = None if args.quiet else print
    rows = run_sweep(spec, log=log)
    paths = emit_outputs(rows, args.out_dir,
                         write_images=not args.no_images)
    print(f"wrote {paths['csv']} ({len(rows)} rows)")
    return 0


# -- serve ---------------------------------------------------------------------


def _cmd_serve(args):
    import uvicorn

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buqo",
        description="Hypothesis tests for structures in CT reconstructions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate",
                       help="simulate tomographic data from a phantom")
    p.add_argument("--phantom", required=True,
                   help="phantom description JSON")
    p.add_argument("--angles", type=int, required=True)
    p.add_argument("--detectors", type=int, default=450)
    p.add_argument("--sigma", type=float, required=True,
                   help="noise level relative to the peak clean value")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct",
                       help="solve the constrained reconstruction")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--epsilon", type=float, default=None,
                   help="override the dataset's data-ball radius")
    p.add_argument("--psi", default="haar3",
                   help="sparsity transform (haar<levels> or grad)")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("describe-structure",
                       help="constraint parameters a mask induces on an "
                            "image")
    p.add_argument("--image", required=True, help="RAWJ image path")
    p.add_argument("--mask", required=True, help="PGM mask path")
    p.add_argument("--ring-width", type=int, default=3)
    p.add_argument("--include-samples", action="store_true")
    p.add_argument("--out", default=None, help="write JSON here instead "
                   "of stdout")
    p.set_defaults(func=_cmd_describe_structure)

    p = sub.add_parser("test",
                       help="test a masked structure against the data")
    p.add_argument("--map-result", required=True,
                   help="directory written by reconstruct")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--mask", required=True, help="PGM mask path")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--ring-width", type=int, default=3)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("sweep", help="run the experiment grid")
    p.add_argument("--spec", required=True, help="sweep description JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--no-images", action="store_true",
                   help="skip the per-cell RAWJ images")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="start the HTTP probe service")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT)))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default="buqo-data")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
