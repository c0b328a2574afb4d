"""Discrete gradients, isotropic total variation, and the data-fit solver.

``solve_tv_subproblem`` minimizes

    (1/N) ||y - A z||^2  +  alpha * TV(z)  +  (beta/2) ||z - anchor||^2

with a primal-dual hybrid gradient scheme that dualizes the TV term.  The
proximal step of the smooth-plus-quadratic part is computed by conjugate
gradient on its normal equations, which stays correct for arbitrary
sampling masks (the real-part adjoint breaks the Fourier diagonalization
that would otherwise apply).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .acquisition import KSpace, adjoint, forward

# forward differences have operator norm squared bounded by 8; the
# primal/dual steps are chosen on that boundary: tau * sigma * 8 == 1
_PD_STEP = 1.0 / np.sqrt(8.0)


def grad(x: np.ndarray) -> np.ndarray:
    """Forward-difference gradient field, shape (2, h, w).

    ``grad(x)[0]`` holds the horizontal differences and ``grad(x)[1]`` the
    vertical ones; the last difference along each axis is zero (Neumann
    boundary).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {x.shape}")
    return kernels.grad_field(x)


def div(g: np.ndarray) -> np.ndarray:
    """Discrete divergence: the exact negative adjoint of :func:`grad`."""
    g = np.ascontiguousarray(g, dtype=np.float64)
    if g.ndim != 3 or g.shape[0] != 2:
        raise ValueError(f"expected a (2, h, w) field, got shape {g.shape}")
    return kernels.divergence(g)


def tv_value(x: np.ndarray) -> float:
    """Isotropic total variation: sum of pointwise gradient magnitudes."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {x.shape}")
    return float(kernels.tv_sum(x))


def data_fit(k: KSpace, z: np.ndarray) -> float:
    """Mean squared measurement misfit (1/N) * ||y - A z||^2."""
    r = k.samples - forward(z, k.mask)
    n = k.mask.width * k.mask.height
    return float(np.vdot(r, r).real) / n


@dataclass
class TvSubproblemSpec:
    """Inputs of one data-fit + TV (+ quadratic anchor) minimization."""

    k: KSpace
    alpha: float
    beta: float = 0.0
    anchor: np.ndarray | None = None
    max_iters: int = 500
    rel_tol: float = 1e-6
    cg_tol: float = 1e-10
    cg_max_iters: int = 500

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.beta > 0 and self.anchor is None:
            raise ValueError("beta > 0 requires an anchor image")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolveStats:
    """Iteration count, final objective and relative primal change."""

    iterations: int
    objective: float
    rel_change: float
    objective_trace: list[tuple[int, float]] = field(default_factory=list)

    def csv_row(self) -> str:
        return f"{self.iterations},{self.objective!r},{self.rel_change!r}"


def _conjugate_gradient(apply_op, b, x0, tol, max_iters):
    """Plain CG for an SPD operator given as a callable."""
    x = x0.copy()
    r = b - apply_op(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    b_norm = float(np.sqrt(np.vdot(b, b).real))
    stop = tol * max(b_norm, 1e-300)
    for _ in range(max_iters):
        if np.sqrt(rs) <= stop:
            break
        q = apply_op(p)
        a = rs / float(np.vdot(p, q).real)
        x += a * p
        r -= a * q
        rs_new = float(np.vdot(r, r).real)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def solve_tv_subproblem(
    spec: TvSubproblemSpec, z0: np.ndarray
) -> tuple[np.ndarray, SolveStats]:
    """Approximately minimize the data-fit + TV + anchor objective.

    Primal-dual iteration with over-relaxation parameter 1 and steps
    ``tau = sigma = 1/sqrt(8)``; stops after ``max_iters`` iterations or
    when the relative primal change drops below ``rel_tol``.  The objective
    is logged every 10 iterations into ``SolveStats.objective_trace``.

    Raises FloatingPointError when the iterates stop being finite.
    """
    mask = spec.k.mask
    if z0.shape != (mask.height, mask.width):
        raise ValueError(f"z0 shape {z0.shape} does not match grid {mask.height}x{mask.width}")
    z = np.ascontiguousarray(z0, dtype=np.float64).copy()

    n = mask.width * mask.height
    tau = sigma = _PD_STEP
    beta = float(spec.beta)
    alpha = float(spec.alpha)
    anchor = spec.anchor

    aty = adjoint(spec.k.samples, mask)
    rhs_base = (2.0 / n) * aty
    if beta > 0 and anchor is not None:
        rhs_base = rhs_base + beta * np.asarray(anchor, dtype=np.float64)
    c = beta + 1.0 / tau

    def normal_op(v):
        return (2.0 / n) * adjoint(forward(v, mask), mask) + c * v

    def objective(v):
        val = data_fit(spec.k, v)
        if alpha > 0:
            val += alpha * tv_value(v)
        if beta > 0 and anchor is not None:
            d = v - anchor
            val += 0.5 * beta * float(np.vdot(d, d).real)
        return val

    p = np.zeros((2, mask.height, mask.width), dtype=np.float64)
    z_bar = z.copy()
    rel_change = np.inf
    trace: list[tuple[int, float]] = []
    iters_done = 0

    for it in range(1, spec.max_iters + 1):
        iters_done = it
        p = kernels.project_pairs(p + sigma * kernels.grad_field(z_bar), alpha)
        w = z + tau * kernels.divergence(p)
        z_new = _conjugate_gradient(
            normal_op, rhs_base + w / tau, z, spec.cg_tol, spec.cg_max_iters
        )
        if not np.isfinite(z_new).all():
            raise FloatingPointError("TV solver produced non-finite values")
        dz = float(np.sqrt(np.vdot(z_new - z, z_new - z).real))
        z_norm = float(np.sqrt(np.vdot(z, z).real))
        rel_change = dz / max(z_norm, 1e-300)
        z_bar = 2.0 * z_new - z
        z = z_new
        if it % 10 == 0:
            trace.append((it, objective(z)))
        if rel_change < spec.rel_tol:
            break

    stats = SolveStats(
        iterations=iters_done,
        objective=objective(z),
        rel_change=rel_change,
        objective_trace=trace,
    )
    return z, stats


def tv_reconstruct(
    k: KSpace,
    alpha: float,
    max_iters: int = 500,
    rel_tol: float = 1e-6,
    z0: np.ndarray | None = None,
) -> np.ndarray:
    """TV-regularized reconstruction from undersampled measurements.

    Minimizes the data misfit plus ``alpha`` times the total variation; the
    no-compression baseline of the evaluation suite.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    from .acquisition import zero_filled_recon

    if z0 is None:
        z0 = zero_filled_recon(k)
    spec = TvSubproblemSpec(k=k, alpha=alpha, max_iters=max_iters, rel_tol=rel_tol)
    z, _ = solve_tv_subproblem(spec, z0)
    return z
