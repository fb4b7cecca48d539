"""Hypothesis tests for structures in CT reconstructions.

The pipeline: simulate (or load) tomographic data, reconstruct by
constrained convex optimization, describe a suspected structure with a
mask, and test whether the data actually supports it. The test reports a
confidence score in [0, 1] and a decision, never just a picture.
"""

from .grid import (Image, Mask, Sinogram, load_image, load_mask_pgm,
                   load_rawj, load_sinogram, rle_decode, rle_encode,
                   save_mask_pgm, save_rawj)
from .hypotest import (CredibleRegion, TestReport, eta_alpha,
                       evaluation_ratio, run_test)
from .linops import (Compose, CountedLinearOperator, Gradient, Identity,
                     IndexSelect, MaskSelect, Scale, VStack,
                     adjoint_mismatch, power_method)
from .mapsolver import (MapProblem, MapResult, SolverConfig,
                        load_map_result, save_map_result, solve_map)
from .phantom import (Blob, Ellipse, Phantom, disk_mask, load_phantom,
                      pe_phantom, phantom_from_doc, render_phantom,
                      save_phantom, structure_mask)
from .prox import (project_l1_ball, project_l2_ball, project_nonneg,
                   soft_threshold)
from .structure import (NeighborhoodStats, ProjectionResult,
                        StructureSetParams, membership, project_onto_S,
                        residuals_of, sample_neighborhood)
from .sweep import (SweepRow, SweepSpec, emit_outputs, load_sweep_spec,
                    run_sweep)
from .tomo import (Geometry, NoiseModel, ParallelProjector, SimulatedData,
                   noise_bound, simulate_data)
from .transforms import (GradientSparsity, HaarTransform, make_transform,
                         transform_norm_bound)

__version__ = "0.1.0"

__all__ = [
    "Image", "Mask", "Sinogram", "load_image", "load_mask_pgm",
    "load_rawj", "load_sinogram", "rle_decode", "rle_encode",
    "save_mask_pgm", "save_rawj",
    "CredibleRegion", "TestReport", "eta_alpha", "evaluation_ratio",
    "run_test",
    "Compose", "CountedLinearOperator", "Gradient", "Identity",
    "IndexSelect", "MaskSelect", "Scale", "VStack", "adjoint_mismatch",
    "power_method",
    "MapProblem", "MapResult", "SolverConfig", "load_map_result",
    "save_map_result", "solve_map",
    "Blob", "Ellipse", "Phantom", "disk_mask", "load_phantom",
    "pe_phantom", "phantom_from_doc", "render_phantom", "save_phantom",
    "structure_mask",
    "project_l1_ball", "project_l2_ball", "project_nonneg",
    "soft_threshold",
    "NeighborhoodStats", "ProjectionResult", "StructureSetParams",
    "membership", "project_onto_S", "residuals_of", "sample_neighborhood",
    "SweepRow", "SweepSpec", "emit_outputs", "load_sweep_spec",
    "run_sweep",
    "Geometry", "NoiseModel", "ParallelProjector", "SimulatedData",
    "noise_bound", "simulate_data",
    "GradientSparsity", "HaarTransform", "make_transform",
    "transform_norm_bound",
    "__version__",
]
