"""Linear operators with matched adjoints and evaluation counters.

Every operator maps flat float64 vectors to flat float64 vectors and knows
its input/output dimensions. ``apply`` and ``adjoint`` each bump a counter
by exactly one; the counters are never reset behind the caller's back, so
cost accounting can read them before and after any phase of a computation.

Composite operators (Compose, VStack) call the public ``apply``/``adjoint``
of their children, so a constituent's counter reflects every pass through
it no matter how deeply it is wrapped.
"""

from __future__ import annotations

import threading

import numpy as np

from .grid import Mask

__all__ = [
    "CountedLinearOperator",
    "Identity",
    "DenseMatrix",
    "IndexSelect",
    "MaskSelect",
    "Scale",
    "Gradient",
    "Compose",
    "VStack",
    "power_method",
    "adjoint_mismatch",
]


class CountedLinearOperator:
    """Base class: subclasses implement ``_forward`` and ``_adjoint``."""

    def __init__(self, input_dim: int, output_dim: int):
        if input_dim <= 0 or output_dim <= 0:
            raise ValueError("operator dimensions must be positive")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self._forward_count = 0
        self._adjoint_count = 0
        self._count_lock = threading.Lock()

    # counters are read-only properties; incremented only by apply/adjoint
    @property
    def forward_count(self) -> int:
        return self._forward_count

    @property
    def adjoint_count(self) -> int:
        return self._adjoint_count

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).ravel()
        if v.size != self.input_dim:
            raise ValueError(
                f"{type(self).__name__}.apply: vector length {v.size} "
                f"does not match input_dim {self.input_dim}")
        with self._count_lock:
            self._forward_count += 1
        return self._forward(v)

    def adjoint(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).ravel()
        if u.size != self.output_dim:
            raise ValueError(
                f"{type(self).__name__}.adjoint: vector length {u.size} "
                f"does not match output_dim {self.output_dim}")
        with self._count_lock:
            self._adjoint_count += 1
        return self._adjoint(u)

    def _forward(self, v):
        raise NotImplementedError

    def _adjoint(self, u):
        raise NotImplementedError


class Identity(CountedLinearOperator):
    def __init__(self, dim: int):
        super().__init__(dim, dim)

    def _forward(self, v):
        return v.copy()

    def _adjoint(self, u):
        return u.copy()


class DenseMatrix(CountedLinearOperator):
    """Wrap an explicit 2-D array."""

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
        super().__init__(m.shape[1], m.shape[0])
        self.matrix = m

    def _forward(self, v):
        return self.matrix @ v

    def _adjoint(self, u):
        return self.matrix.T @ u


class IndexSelect(CountedLinearOperator):
    """Pick components at fixed (unique) flat indices; adjoint scatters."""

    def __init__(self, indices, input_dim: int):
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size == 0:
            raise ValueError("empty index selection")
        if idx.min() < 0 or idx.max() >= input_dim:
            raise ValueError(
                f"indices out of range for input_dim {input_dim}")
        if np.unique(idx).size != idx.size:
            raise ValueError("selection indices must be unique")
        super().__init__(input_dim, idx.size)
        self.indices = idx

    def _forward(self, v):
        return v[self.indices]

    def _adjoint(self, u):
        out = np.zeros(self.input_dim)
        out[self.indices] = u
        return out


class MaskSelect(IndexSelect):
    """Restriction of an image to the pixels of a mask, row-major order.

    The adjoint embeds a masked vector back into the image grid with zeros
    elsewhere, so select(adjoint(s)) == s exactly.
    """

    def __init__(self, mask: Mask):
        if mask.cardinality == 0:
            raise ValueError("empty structure mask")
        super().__init__(mask.indices(), mask.size)
        self.mask = mask


def masked_select(mask: Mask, img) -> np.ndarray:
    """One-shot mask restriction of an image (no operator bookkeeping)."""
    if mask.cardinality == 0:
        raise ValueError("empty structure mask")
    values = img.values if hasattr(img, "values") else np.asarray(img).ravel()
    if values.size != mask.size:
        raise ValueError(
            f"mask has {mask.size} pixels but image has {values.size}")
    return values[mask.indices()]


def grad_forward(x: np.ndarray, height: int, width: int) -> np.ndarray:
    """Forward differences, replicate boundary (last row/col slope 0).

    Output stacks the horizontal then the vertical component, each
    flattened row-major, giving a vector of length 2*height*width.
    """
    g = x.reshape(height, width)
    dh = np.zeros_like(g)
    dv = np.zeros_like(g)
    dh[:, :-1] = g[:, 1:] - g[:, :-1]
    dv[:-1, :] = g[1:, :] - g[:-1, :]
    return np.concatenate([dh.ravel(), dv.ravel()])


def grad_adjoint(u: np.ndarray, height: int, width: int) -> np.ndarray:
    n = height * width
    uh = u[:n].reshape(height, width)
    uv = u[n:].reshape(height, width)
    out = np.zeros((height, width))
    out[:, :-1] -= uh[:, :-1]
    out[:, 1:] += uh[:, :-1]
    out[:-1, :] -= uv[:-1, :]
    out[1:, :] += uv[:-1, :]
    return out.ravel()


class Gradient(CountedLinearOperator):
    """Discrete gradient of an image: 2N outputs, operator norm <= sqrt(8)."""

    def __init__(self, height: int, width: int):
        super().__init__(height * width, 2 * height * width)
        self.height = height
        self.width = width

    def _forward(self, v):
        return grad_forward(v, self.height, self.width)

    def _adjoint(self, u):
        return grad_adjoint(u, self.height, self.width)


class Scale(CountedLinearOperator):
    """factor * op; evaluations count against the wrapped operator too."""

    def __init__(self, op: CountedLinearOperator, factor: float):
        super().__init__(op.input_dim, op.output_dim)
        self.op = op
        self.factor = float(factor)

    def _forward(self, v):
        return self.factor * self.op.apply(v)

    def _adjoint(self, u):
        return self.factor * self.op.adjoint(u)


class Compose(CountedLinearOperator):
    """outer(inner(v)); children keep their own evaluation counts."""

    def __init__(self, outer: CountedLinearOperator,
                 inner: CountedLinearOperator):
        if inner.output_dim != outer.input_dim:
            raise ValueError(
                f"cannot compose: inner output_dim {inner.output_dim} "
                f"!= outer input_dim {outer.input_dim}")
        super().__init__(inner.input_dim, outer.output_dim)
        self.outer = outer
        self.inner = inner

    def _forward(self, v):
        return self.outer.apply(self.inner.apply(v))

    def _adjoint(self, u):
        return self.inner.adjoint(self.outer.adjoint(u))


class VStack(CountedLinearOperator):
    """Stack operators sharing an input space; output blocks concatenate."""

    def __init__(self, blocks):
        blocks = list(blocks)
        if not blocks:
            raise ValueError("VStack needs at least one block")
        dim = blocks[0].input_dim
        for b in blocks:
            if b.input_dim != dim:
                raise ValueError(
                    f"VStack blocks disagree on input_dim: "
                    f"{b.input_dim} vs {dim}")
        super().__init__(dim, sum(b.output_dim for b in blocks))
        self.blocks = blocks
        self._offsets = np.cumsum([0] + [b.output_dim for b in blocks])

    def _forward(self, v):
        return np.concatenate([b.apply(v) for b in self.blocks])

    def _adjoint(self, u):
        out = np.zeros(self.input_dim)
        for b, lo, hi in zip(self.blocks, self._offsets, self._offsets[1:]):
            out += b.adjoint(u[lo:hi])
        return out


def power_method(op: CountedLinearOperator, iters: int = 50,
                 seed: int = 0) -> float:
    """Estimate the operator (spectral) norm by power iteration on A^T A.

    Runs exactly ``iters`` forward and ``iters`` adjoint evaluations, which
    callers rely on when budgeting operator costs.
    """
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(op.input_dim)
    b /= np.linalg.norm(b)
    lam = 0.0
    for _ in range(iters):
        a = op.adjoint(op.apply(b))
        lam = np.linalg.norm(a)
        if lam == 0.0:
            return 0.0  # b in the null space; norm estimate degenerate
        b = a / lam
    return float(np.sqrt(lam))


def adjoint_mismatch(op: CountedLinearOperator, rng=None) -> float:
    """Relative gap |<Au, v> - <u, A^T v>| / (||Au|| ||v||) on a random pair."""
    rng = np.random.default_rng(rng)
    u = rng.standard_normal(op.input_dim)
    v = rng.standard_normal(op.output_dim)
    au = op.apply(u)
    atv = op.adjoint(v)
    lhs = float(au @ v)
    rhs = float(u @ atv)
    denom = float(np.linalg.norm(au) * np.linalg.norm(v))
    if denom == 0.0:
        return abs(lhs - rhs)
    return abs(lhs - rhs) / denom
