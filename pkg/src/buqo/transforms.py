"""Sparsifying transforms for the reconstruction objective.

Two choices, selectable by name:

* ``haar3``: orthonormal 2-D Haar wavelet, 3 decomposition levels by
  default. Orthonormality gives synthesize == adjoint == inverse and an
  operator norm of exactly 1.
* ``grad``: anisotropic discrete gradient (horizontal then vertical
  forward differences, replicate boundary), output length 2N, operator
  norm bounded by sqrt(8).
"""

from __future__ import annotations

import numpy as np

from .linops import CountedLinearOperator, grad_adjoint, grad_forward

__all__ = ["HaarTransform", "GradientSparsity", "make_transform",
           "transform_norm_bound"]

_SQRT2 = np.sqrt(2.0)


def _haar_level_forward(block: np.ndarray) -> np.ndarray:
    """One separable analysis level on a square block (even side)."""
    s = (block[:, 0::2] + block[:, 1::2]) / _SQRT2
    d = (block[:, 0::2] - block[:, 1::2]) / _SQRT2
    rows = np.concatenate([s, d], axis=1)
    s2 = (rows[0::2, :] + rows[1::2, :]) / _SQRT2
    d2 = (rows[0::2, :] - rows[1::2, :]) / _SQRT2
    return np.concatenate([s2, d2], axis=0)


def _haar_level_inverse(block: np.ndarray) -> np.ndarray:
    m = block.shape[0]
    h = m // 2
    rows = np.empty_like(block)
    rows[0::2, :] = (block[:h, :] + block[h:, :]) / _SQRT2
    rows[1::2, :] = (block[:h, :] - block[h:, :]) / _SQRT2
    out = np.empty_like(block)
    out[:, 0::2] = (rows[:, :h] + rows[:, h:]) / _SQRT2
    out[:, 1::2] = (rows[:, :h] - rows[:, h:]) / _SQRT2
    return out


class HaarTransform(CountedLinearOperator):
    """Multilevel orthonormal Haar analysis of an n x n image.

    Coefficients are stored in the usual nested layout (approximation band
    in the top-left corner at the coarsest level) and flattened row-major,
    so the output length equals the number of pixels.
    """

    kind = "haar-wavelet"

    def __init__(self, side: int, levels: int = 3):
        if levels < 1:
            raise ValueError("need at least one decomposition level")
        if side % (1 << levels) != 0:
            raise ValueError(
                f"image side {side} is not divisible by 2^{levels}; "
                f"pad the image to a multiple of {1 << levels} first")
        super().__init__(side * side, side * side)
        self.side = side
        self.levels = levels

    def analyze(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.adjoint(coeffs)

    def _forward(self, v):
        out = v.reshape(self.side, self.side).copy()
        m = self.side
        for _ in range(self.levels):
            out[:m, :m] = _haar_level_forward(out[:m, :m])
            m //= 2
        return out.ravel()

    def _adjoint(self, u):
        out = u.reshape(self.side, self.side).copy()
        m = self.side >> (self.levels - 1)
        while m <= self.side:
            out[:m, :m] = _haar_level_inverse(out[:m, :m])
            m *= 2
        return out.ravel()


class GradientSparsity(CountedLinearOperator):
    """Gradient used as a sparsity transform: coefficients are the stacked
    forward differences, so the l1 norm of the output is the anisotropic
    total variation of the image."""

    kind = "anisotropic-gradient"

    def __init__(self, side: int):
        super().__init__(side * side, 2 * side * side)
        self.side = side

    def analyze(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.adjoint(coeffs)

    def _forward(self, v):
        return grad_forward(v, self.side, self.side)

    def _adjoint(self, u):
        return grad_adjoint(u, self.side, self.side)


def make_transform(kind: str, side: int):
    """Build a transform by CLI name: 'haar<levels>' or 'grad'."""
    if kind == "grad":
        return GradientSparsity(side)
    if kind.startswith("haar"):
        tail = kind[4:]
        if tail.isdigit() and int(tail) >= 1:
            return HaarTransform(side, levels=int(tail))
    raise ValueError(
        f"unknown transform {kind!r}, expected grad or haar<levels> "
        f"(for example haar3)")


def transform_norm_bound(t) -> float:
    """Tight, cheap upper bound on the operator norm of a transform."""
    if isinstance(t, HaarTransform):
        return 1.0  # orthonormal
    if isinstance(t, GradientSparsity):
        return np.sqrt(8.0)
    raise TypeError(f"no norm bound known for {type(t).__name__}")
