"""The structure-free convex set and its Euclidean projection.

Given a mask over a reconstructed image, the set collects every
nonnegative image whose masked pixel values and masked gradient components
stay within norm balls around the neighborhood's typical intensity and
smoothness. An image in this set looks, inside the mask, like the tissue
surrounding the mask: the probed structure has been "filled in".

The ball parameters come from a ring of pixels around the mask: the center
is the ring's median, the radius the larger of (60th percentile - median)
and (median - 40th percentile), with linear-interpolation percentiles and
a floor so constant neighborhoods still give the set an interior.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import Image, Mask
from .linops import grad_adjoint, grad_forward
from .mapsolver import SolverConfig
from .prox import project_l2_ball

__all__ = [
    "NeighborhoodStats",
    "StructureSetParams",
    "sample_neighborhood",
    "membership",
    "residuals_of",
    "project_onto_S",
    "ProjectionResult",
]


def _flat(x) -> np.ndarray:
    values = x.values if hasattr(x, "values") else x
    return np.asarray(values, dtype=np.float64).ravel()

_GRAD_NORM = np.sqrt(8.0)  # spectral bound for the discrete gradient


@dataclass(frozen=True)
class NeighborhoodStats:
    intensities: np.ndarray = field(repr=False)
    gradient_samples: np.ndarray = field(repr=False)
    mu_pix: float
    r_pix: float
    mu_grad: float
    r_grad: float

    def __post_init__(self):
        if self.r_pix <= 0 or self.r_grad <= 0:
            raise ValueError("ball radii must be positive (floored)")


@dataclass(frozen=True)
class StructureSetParams:
    """Everything needed to evaluate or project onto the set."""

    mask: Mask
    stats: NeighborhoodStats


def _center_radius(samples: np.ndarray, floor: float):
    mu = float(np.median(samples))
    p60, p40 = np.percentile(samples, [60.0, 40.0])
    r = max(float(p60) - mu, mu - float(p40), floor)
    return mu, r


def sample_neighborhood(img: Image, mask: Mask,
                        ring_width: int = 3) -> NeighborhoodStats:
    """Collect intensity and gradient statistics on a ring around the mask.

    The ring is the dilation of the mask by ``ring_width`` (square
    structuring element) minus the mask itself.
    """
    if (img.height, img.width) != (mask.height, mask.width):
        raise ValueError(
            f"image is {img.height}x{img.width}, mask is "
            f"{mask.height}x{mask.width}")
    if ring_width < 1:
        raise ValueError("ring_width must be >= 1")
    m = mask.grid
    dilated = ndimage.binary_dilation(m, structure=np.ones((3, 3), bool),
                                      iterations=ring_width)
    ring = dilated & ~m
    if not ring.any():
        raise ValueError("mask touches entire image, no ring to sample")

    peak = float(np.max(img.values))
    intensities = img.grid[ring]
    g = grad_forward(img.values, img.height, img.width)
    gh = g[:img.size].reshape(img.height, img.width)
    gv = g[img.size:].reshape(img.height, img.width)
    gradient_samples = np.concatenate([gh[ring], gv[ring]])

    mu_pix, r_pix = _center_radius(intensities, 0.01 * max(peak, 1e-12))
    mu_grad, r_grad = _center_radius(gradient_samples,
                                     0.005 * max(peak, 1e-12))
    return NeighborhoodStats(intensities, gradient_samples, mu_pix, r_pix,
                             mu_grad, r_grad)


def _masked_values(params: StructureSetParams, x: np.ndarray):
    idx = params.mask.indices()
    h, w = params.mask.height, params.mask.width
    g = grad_forward(x, h, w)
    return x[idx], np.concatenate([g[idx], g[params.mask.size + idx]])


def residuals_of(params: StructureSetParams, x) -> dict:
    """Per-constraint violations, clamped at zero."""
    x = _flat(x)
    vals, grads = _masked_values(params, x)
    s = params.stats
    return {
        "nonneg": max(0.0, -float(np.min(x))),
        "energy": max(0.0,
                      float(np.linalg.norm(vals - s.mu_pix)) - s.r_pix),
        "smooth": max(0.0,
                      float(np.linalg.norm(grads - s.mu_grad)) - s.r_grad),
    }


def membership(params: StructureSetParams, x, rtol: float = 1e-4):
    """Test the three constraints; returns (ok, residuals).

    Ball residuals are compared relative to their radii; the
    nonnegativity check is absolute (projections produce exact zeros).
    """
    res = residuals_of(params, _flat(x))
    ok = (res["nonneg"] <= 1e-12
          and res["energy"] <= rtol * params.stats.r_pix
          and res["smooth"] <= rtol * params.stats.r_grad)
    return ok, res


@dataclass(frozen=True)
class ProjectionResult:
    x: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    residuals: dict
    runtime_s: float

    def image(self, height: int, width: int) -> Image:
        return Image(height, width, self.x)


def project_onto_S(params: StructureSetParams, x0,
                   cfg: SolverConfig = SolverConfig()) -> ProjectionResult:
    """Approximate Euclidean projection of x0 onto the structure-free set.

    Primal-dual iteration: the primal prox handles the quadratic distance
    term and nonnegativity in closed form, one dual block per ball. The
    gradient block is rescaled to unit operator norm so a single step pair
    covers both blocks.
    """
    t0 = time.perf_counter()
    x0 = _flat(x0)
    mask = params.mask
    if x0.size != mask.size:
        raise ValueError(
            f"image has {x0.size} pixels, mask wants {mask.size}")
    s = params.stats
    idx = mask.indices()
    h, w = mask.height, mask.width
    n = mask.size
    lg = _GRAD_NORM

    # K = [select; select o grad / lg], both blocks norm <= 1. Steps are
    # balanced: the reconstruction solver's primal/dual bias is tuned for
    # a very differently scaled operator and must not leak in here.
    tau = 0.99 / np.sqrt(2.0)
    sigma = 0.99 / np.sqrt(2.0)

    def k_s(x):
        g = grad_forward(x, h, w)
        return x[idx], np.concatenate([g[idx], g[n + idx]])

    def k_s_adjoint(u_pix, u_grad):
        out = np.zeros(n)
        out[idx] = u_pix
        full = np.zeros(2 * n)
        full[idx] = u_grad[:idx.size]
        full[n + idx] = u_grad[idx.size:]
        return out + grad_adjoint(full, h, w) / lg

    rho = cfg.relax
    x = x0.copy()
    a, b = k_s(x)
    u_pix = np.zeros(idx.size)
    u_grad = np.zeros(2 * idx.size)

    tiny = 1e-30
    iterations = 0
    converged = False
    x_cand = x
    prev_cand = x

    for k in range(1, cfg.max_iters + 1):
        drift = k_s_adjoint(u_pix, u_grad)
        prev_cand = x_cand
        x_cand = np.maximum((x - tau * drift + tau * x0) / (1.0 + tau),
                            0.0)
        a_cand, b_cand = k_s(x_cand)

        v = u_pix + sigma * (2.0 * a_cand - a)
        up_cand = v - sigma * project_l2_ball(v / sigma, s.mu_pix, s.r_pix)
        v = u_grad + sigma * (2.0 * b_cand - b) / lg
        ug_cand = v - sigma * project_l2_ball(v / sigma, s.mu_grad / lg,
                                              s.r_grad / lg)

        x = x + rho * (x_cand - x)
        u_pix = u_pix + rho * (up_cand - u_pix)
        u_grad = u_grad + rho * (ug_cand - u_grad)
        a = a + rho * (a_cand - a)
        b = b + rho * (b_cand - b)

        rel = float(np.linalg.norm(x_cand - prev_cand)) / max(
            float(np.linalg.norm(prev_cand)), tiny)
        iterations = k

        e_res = float(np.linalg.norm(a_cand - s.mu_pix)) - s.r_pix
        g_res = float(np.linalg.norm(b_cand - s.mu_grad)) - s.r_grad
        if (rel <= cfg.rel_tol
                and e_res <= cfg.feas_tol * s.r_pix
                and g_res <= cfg.feas_tol * s.r_grad):
            converged = True
            break

    return ProjectionResult(
        x=x_cand,
        iterations=iterations,
        converged=converged,
        residuals=residuals_of(params, x_cand),
        runtime_s=time.perf_counter() - t0,
    )
