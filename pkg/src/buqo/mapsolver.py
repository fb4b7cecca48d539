"""Constrained reconstruction: minimize the transform l1 norm subject to a
data-fidelity ball and nonnegativity.

    minimize ||Psi x||_1   s.t.  ||Phi x - y||_2 <= eps,  x >= 0

Solved with a primal-dual (Chambolle-Pock family) iteration carrying two
dual blocks, one per constraint/objective operator:

* data block: indicator of the l2 ball around y, dual step via the Moreau
  identity (shrink toward the ball)
* sparsity block: l1 norm, whose conjugate prox is a clip to [-1, 1]
* primal prox: projection onto the nonnegative orthant

Steps obey tau * sigma * ||[Phi; Psi]||^2 <= 1 with the stacked operator
norm estimated by a 50-step power method; the iterate update is
over-relaxed. The update candidates produced by each prox are what the
result reports, so the returned image is exactly nonnegative even though
the relaxed internal state may not be.

Evaluation accounting, relied on by cost reports: with P power iterations
and k main iterations, the measurement operator sees P + 1 + k forward
applications (power, one for the initial iterate's image, one per
iteration) and P + 1 + k adjoints (power, warm start from the data, one
per iteration). The transform sees P + 1 + k forward and P + k adjoint
applications.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Image
from .linops import CountedLinearOperator, Scale, VStack, power_method
from .prox import project_l2_ball, project_nonneg
from .transforms import transform_norm_bound

__all__ = [
    "MapProblem",
    "SolverConfig",
    "MapResult",
    "solve_map",
    "save_map_result",
    "load_map_result",
]


@dataclass(frozen=True)
class MapProblem:
    phi: CountedLinearOperator
    psi: CountedLinearOperator
    y: np.ndarray
    epsilon: float
    psi_norm_bound: float = 0.0  # 0: look up a known bound for psi

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        object.__setattr__(self, "y", y)
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if y.size != self.phi.output_dim:
            raise ValueError(
                f"data length {y.size} does not match measurement "
                f"output_dim {self.phi.output_dim}")
        if self.phi.input_dim != self.psi.input_dim:
            raise ValueError(
                f"operators disagree on image size: {self.phi.input_dim} "
                f"vs {self.psi.input_dim}")
        if self.psi_norm_bound == 0.0:
            object.__setattr__(self, "psi_norm_bound",
                               transform_norm_bound(self.psi))


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    rel_tol: float = 1e-5       # relative iterate change
    feas_tol: float = 1e-4      # constraint residuals, relative
    power_iters: int = 50
    power_seed: int = 0
    tau: float = 0.0            # primal step; 0 = derive from operator norm
    sigma: float = 0.0          # dual step; 0 = derive from operator norm
    step_ratio: float = 0.15    # primal/dual step balance of the
                                # reconstruction solve, > 0; biasing the dual
                                # block speeds up feasibility-bound runs. The
                                # set-distance stages size their own steps.
    relax: float = 1.9          # over-relaxation factor, in (0, 2)
    transform_weight: float = 0.0  # sparsity-block weight; 0 = auto
    window: int = 50            # stability window for distance tracking
    collect_history: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tau < 0 or self.sigma < 0:
            raise ValueError("explicit steps must be positive")
        if self.step_ratio <= 0:
            raise ValueError("step_ratio must be > 0")
        if not 0.0 < self.relax < 2.0:
            raise ValueError("relax must be in (0, 2)")
        if self.transform_weight < 0:
            raise ValueError("transform_weight must be >= 0")


def _steps(config: SolverConfig, norm_bound: float):
    """Primal and dual steps whose product respects the operator norm.

    Explicit steps are validated against tau*sigma*norm^2 <= 1; a single
    explicit step fixes the other to saturate the product. Otherwise both
    come from the norm bound, balanced by step_ratio.
    """
    cap = 1.0 / norm_bound ** 2
    if config.tau > 0 and config.sigma > 0:
        if config.tau * config.sigma > cap * (1.0 + 1e-12):
            raise ValueError(
                f"step product {config.tau * config.sigma:.3e} exceeds "
                f"1/norm^2 = {cap:.3e}")
        return config.tau, config.sigma
    if config.tau > 0:
        return config.tau, 0.98 * cap / config.tau
    if config.sigma > 0:
        return 0.98 * cap / config.sigma, config.sigma
    tau = 0.99 * config.step_ratio / norm_bound
    sigma = 0.99 / (config.step_ratio * norm_bound)
    return tau, sigma


@dataclass(frozen=True)
class MapResult:
    """Converged (or best-effort) reconstruction with its bookkeeping."""

    x: np.ndarray = field(repr=False)
    shape: tuple
    residual: float            # ||Phi x - y||_2 at the returned iterate
    objective: float           # ||Psi x||_1 at the returned iterate
    epsilon: float
    iterations: int
    converged: bool
    op_norm_estimate: float    # stacked-operator norm bound, with margin
    phi_forward_evals: int
    phi_adjoint_evals: int
    psi_forward_evals: int
    psi_adjoint_evals: int
    fitted_data: np.ndarray = field(repr=False)    # Phi x, exact
    fitted_coeffs: np.ndarray = field(repr=False)  # Psi x, exact
    runtime_s: float = 0.0
    history: dict | None = field(default=None, repr=False)

    @property
    def image(self) -> Image:
        return Image(self.shape[0], self.shape[1], self.x)


def _infer_shape(n: int) -> tuple:
    side = int(round(math.sqrt(n)))
    if side * side != n:
        raise ValueError(f"cannot infer a square image shape from {n} pixels")
    return (side, side)


def solve_map(problem: MapProblem, config: SolverConfig = SolverConfig(),
              shape: tuple | None = None) -> MapResult:
    """Run the primal-dual iteration until feasible and stable.

    Stops at the first iterate whose relative change is below rel_tol and
    whose data residual is within the (relative) feasibility tolerance of
    epsilon; an infeasible problem (for example eps = 0 with inconsistent
    data) runs to max_iters and comes back flagged, never raises.
    """
    t0 = time.perf_counter()
    phi, psi, y, eps = problem.phi, problem.psi, problem.y, problem.epsilon
    shape = shape or _infer_shape(phi.input_dim)

    f_phi0, a_phi0 = phi.forward_count, phi.adjoint_count
    f_psi0, a_psi0 = psi.forward_count, psi.adjoint_count

    # The sparsity term is solved as weight * ||Psi x||_1, which has the
    # same minimizer for any positive weight but balances how fast the
    # two dual blocks move. Small weights starve the sparsity dual when
    # the noise ball is wide, so the default grows with epsilon
    # (calibrated across the tomography grid; explicit values override).
    weight = config.transform_weight
    if weight == 0.0:
        weight = max(1.0, eps / 30.0)

    # norm of the stacked operator [measurement; weighted transform]
    # governs the steps; the power method costs exactly power_iters
    # evaluations of each operator direction
    stacked = VStack([phi, Scale(psi, weight)])
    norm_est = power_method(stacked, config.power_iters,
                            config.power_seed) * 1.05
    if norm_est == 0.0:
        norm_est = 1.0
    tau, sigma = _steps(config, norm_est)

    rho = config.relax

    # relaxed state (x, duals, their operator images); the candidate from
    # each prox step is what gets reported, it is feasible-nonnegative
    x = project_nonneg(phi.adjoint(y))
    peak = float(np.max(x))
    if peak > 0:
        x /= peak
    big_f = phi.apply(x)            # phi @ x, updated by linear mixing
    big_w = weight * psi.apply(x)   # weighted transform image
    u = np.zeros(phi.output_dim)
    w = np.zeros(psi.output_dim)

    feas_atol = 1e-9 * max(1.0, float(np.linalg.norm(y)))
    tiny = 1e-30

    x_cand = x
    f_cand, w_cand = big_f, big_w
    iterations = 0
    converged = False
    history = {"residual": [], "objective": [], "rel_change": []} \
        if config.collect_history else None

    for k in range(1, config.max_iters + 1):
        grad = phi.adjoint(u) + weight * psi.adjoint(w)
        x_cand = project_nonneg(x - tau * grad)

        f_cand = phi.apply(x_cand)
        w_cand = weight * psi.apply(x_cand)

        v = u + sigma * (2.0 * f_cand - big_f)
        u_cand = v - sigma * project_l2_ball(v / sigma, y, eps)
        w_new = np.clip(w + sigma * (2.0 * w_cand - big_w), -1.0, 1.0)

        # iterate change measured on the carried state; the prox
        # candidates it generates are what feasibility is judged on
        step_norm = rho * float(np.linalg.norm(x_cand - x))
        x = x + rho * (x_cand - x)
        u = u + rho * (u_cand - u)
        w = w + rho * (w_new - w)
        big_f = big_f + rho * (f_cand - big_f)
        big_w = big_w + rho * (w_cand - big_w)

        residual = float(np.linalg.norm(f_cand - y))
        rel = step_norm / max(float(np.linalg.norm(x)), tiny)
        iterations = k
        if history is not None:
            history["residual"].append(residual)
            history["objective"].append(
                float(np.sum(np.abs(w_cand))) / weight)
            history["rel_change"].append(rel)

        if (rel <= config.rel_tol
                and residual <= eps * (1.0 + config.feas_tol) + feas_atol):
            converged = True
            break

    # internal transform images carry the balancing weight; report the
    # plain l1 objective and plain coefficients
    return MapResult(
        x=x_cand,
        shape=shape,
        residual=float(np.linalg.norm(f_cand - y)),
        objective=float(np.sum(np.abs(w_cand))) / weight,
        epsilon=eps,
        iterations=iterations,
        converged=converged,
        op_norm_estimate=norm_est,
        phi_forward_evals=phi.forward_count - f_phi0,
        phi_adjoint_evals=phi.adjoint_count - a_phi0,
        psi_forward_evals=psi.forward_count - f_psi0,
        psi_adjoint_evals=psi.adjoint_count - a_psi0,
        fitted_data=f_cand,
        fitted_coeffs=w_cand / weight,
        runtime_s=time.perf_counter() - t0,
        history={k2: np.asarray(v2) for k2, v2 in history.items()}
        if history is not None else None,
    )


# ---------------------------------------------------------------------------
# on-disk form: metadata JSON + image RAWJ + fitted arrays
#
# The fitted arrays make a saved result a complete warm start: a test run
# loaded from disk costs zero extra operator evaluations before its own
# iterations, and the counters keep meaning what they measured.

_SCALAR_FIELDS = (
    "residual", "objective", "epsilon", "iterations", "converged",
    "op_norm_estimate", "phi_forward_evals", "phi_adjoint_evals",
    "psi_forward_evals", "psi_adjoint_evals", "runtime_s",
)


def save_map_result(out_dir, result: MapResult, context: dict | None = None):
    """Persist a result into ``out_dir`` (created if needed).

    ``context`` is free-form extra metadata (geometry, transform kind)
    stored under a "context" key; returns the metadata file path.
    """
    from .grid import save_rawj  # local import, grid does not import us

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_rawj(out / "xmap", result.image)
    np.save(out / "fitted_data.npy", result.fitted_data)
    np.save(out / "fitted_coeffs.npy", result.fitted_coeffs)
    doc = {name: getattr(result, name) for name in _SCALAR_FIELDS}
    doc["shape"] = list(result.shape)
    if context:
        doc["context"] = context
    path = out / "map.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def load_map_result(path) -> MapResult:
    """Inverse of :func:`save_map_result`; takes the dir or the JSON path.

    The iteration history is not persisted. The "context" block, when
    present, is attached under ``history["context"]`` for callers that
    need the original geometry.
    """
    from .grid import load_image

    p = Path(path)
    if p.is_dir():
        p = p / "map.json"
    doc = json.loads(p.read_text())
    img = load_image(p.parent / "xmap")
    shape = tuple(doc["shape"])
    if (img.height, img.width) != shape:
        raise ValueError(
            f"stored image is {img.height}x{img.width}, metadata says "
            f"{shape}")
    kwargs = {name: doc[name] for name in _SCALAR_FIELDS}
    return MapResult(
        x=img.values,
        shape=shape,
        fitted_data=np.load(p.parent / "fitted_data.npy"),
        fitted_coeffs=np.load(p.parent / "fitted_coeffs.npy"),
        history={"context": doc["context"]} if "context" in doc else None,
        **kwargs,
    )
