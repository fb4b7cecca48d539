"""Closed-form projections and proximity operators used by the solvers.

All functions are pure, operate on flat float64 arrays, and return new
arrays. Ball constraints given as open conditions elsewhere are handled
through their closures here, since projecting onto an open set is
ill-posed and the closure has the same distance function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BallSpec",
    "project_ball",
    "project_l2_ball",
    "project_l1_ball",
    "project_nonneg",
    "soft_threshold",
]


@dataclass(frozen=True)
class BallSpec:
    """A norm ball: center (scalar broadcast or vector), radius, norm tag."""

    center: object
    radius: float
    norm: str = "l2"

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"ball radius must be >= 0, got {self.radius}")
        if self.norm not in ("l2", "l1"):
            raise ValueError(f"unknown ball norm {self.norm!r}")


def project_ball(spec: BallSpec, v: np.ndarray) -> np.ndarray:
    if spec.norm == "l2":
        return project_l2_ball(v, spec.center, spec.radius)
    return np.asarray(spec.center) + project_l1_ball(
        np.asarray(v, dtype=np.float64) - spec.center, spec.radius)


def project_l2_ball(v, center, radius: float) -> np.ndarray:
    """Euclidean projection onto {u : ||u - center||_2 <= radius}."""
    if radius < 0:
        raise ValueError(f"ball radius must be >= 0, got {radius}")
    v = np.asarray(v, dtype=np.float64).ravel()
    d = v - center
    nrm = float(np.linalg.norm(d))
    if nrm <= radius:
        return v.copy()
    return center + d * (radius / nrm)


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto the l1 ball of the given radius.

    Sort-based exact algorithm: the projection is a soft threshold whose
    level is the largest KKT-feasible pivot of the sorted magnitudes.
    """
    if radius < 0:
        raise ValueError(f"ball radius must be >= 0, got {radius}")
    v = np.asarray(v, dtype=np.float64).ravel()
    mag = np.abs(v)
    if mag.sum() <= radius:
        return v.copy()
    if radius == 0.0:
        return np.zeros_like(v)
    u = np.sort(mag)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    feasible = np.nonzero(u - (css - radius) / k > 0)[0]
    # the first pivot is always feasible in exact arithmetic; it can be
    # lost to cancellation when radius is below the ulp of the sums
    pivot = int(feasible[-1]) if feasible.size else 0
    theta = (css[pivot] - radius) / (pivot + 1)
    return np.sign(v) * np.maximum(mag - theta, 0.0)


def project_nonneg(v) -> np.ndarray:
    """Componentwise max(v, 0); negative zeros normalized to +0.0."""
    v = np.asarray(v, dtype=np.float64)
    return np.maximum(v, 0.0) + 0.0


def soft_threshold(tau: float, v) -> np.ndarray:
    """sign(v) * max(|v| - tau, 0), the prox of tau * l1-norm."""
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
