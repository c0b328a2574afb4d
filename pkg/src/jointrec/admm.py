"""ADMM loop coupling a black-box codec with the TV-regularized data fit.

Each iteration compresses the current consensus point, solves the
data-fit + TV subproblem anchored at the decompressed image, and updates
the scaled dual variable.  The output bitstream is standard-compatible:
the returned image is exactly the decompression of the returned bits, with
no post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .acquisition import KSpace, zero_filled_recon
from .codec import Bitstream, CodecParams, compress, decompress
from .evaluation import psnr
from .tv import TvSubproblemSpec, solve_tv_subproblem, tv_reconstruct

TERMINATED_MAX_ITERS = "max-iters"
TERMINATED_CONVERGED = "converged"
TERMINATED_DIVERGED = "diverged"

INIT_MODES = ("zero-filled", "tv-recon", "provided")


def beta_schedule(qp: int) -> float:
    """Default consensus coupling weight for a quantization parameter.

    Linear in QP: 5.5 - 0.1 * qp, positive over the whole sweep range.
    """
    if not 0 <= qp <= 51:
        raise ValueError(f"qp must be in [0, 51], got {qp}")
    return 5.5 - 0.1 * qp


@dataclass
class AdmmConfig:
    """Knobs of one joint reconstruction-and-compression run."""

    qp: int = 31
    alpha: float = 0.0
    beta_override: float | None = None
    max_iters: int = 40
    conv_window: int = 3
    conv_eps: float = 0.5
    div_eps: float = 50.0
    init: str = "zero-filled"
    init_image: np.ndarray | None = None
    solver_max_iters: int = 500
    solver_rel_tol: float = 1e-6
    keep_iterates: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.conv_eps >= self.div_eps:
            raise ValueError("conv_eps must be smaller than div_eps")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.init == "provided" and self.init_image is None:
            raise ValueError("init='provided' requires init_image")

    @property
    def beta(self) -> float:
        if self.beta_override is not None:
            return float(self.beta_override)
        return beta_schedule(self.qp)


class StoppingRule:
    """Consensus-gap stopping rule driven by w = ||v_hat - z_hat||_1.

    Convergence: |w_t - w_{t-1}| < conv_eps for ``window`` consecutive
    iterations.  Divergence: the gap grows by more than div_eps in one
    iteration, or becomes non-finite.  Deltas exist from the second
    observation onward.
    """

    def __init__(self, conv_eps: float = 0.5, div_eps: float = 50.0, window: int = 3):
        self.conv_eps = conv_eps
        self.div_eps = div_eps
        self.window = window
        self._prev: float | None = None
        self._streak = 0

    def observe(self, w: float) -> str | None:
        if not math.isfinite(w):
            return TERMINATED_DIVERGED
        if self._prev is None:
            self._prev = w
            return None
        delta = w - self._prev
        self._prev = w
        if delta > self.div_eps:
            return TERMINATED_DIVERGED
        if abs(delta) < self.conv_eps:
            self._streak += 1
            if self._streak >= self.window:
                return TERMINATED_CONVERGED
        else:
            self._streak = 0
        return None


@dataclass
class IterationRecord:
    """One row of the run log."""

    t: int
    w: float
    bit_count: int
    bpp: float
    psnr: float | None
    beta: float
    qp: int
    alpha: float
    v_hat: np.ndarray | None = None
    z_hat: np.ndarray | None = None
    u: np.ndarray | None = None


@dataclass
class AdmmResult:
    """Final bitstream, its decompression, and the per-iteration trace."""

    final_bitstream: Bitstream
    final_image: np.ndarray
    termination: str
    trace: list[IterationRecord] = field(default_factory=list)

    @property
    def bit_count(self) -> int:
        return self.final_bitstream.bit_count

    def trace_csv_rows(self, method: str = "joint") -> list[str]:
        rows = []
        for r in self.trace:
            p = "" if r.psnr is None else repr(r.psnr)
            rows.append(
                f"{method},{r.t},{r.w!r},{r.bit_count},{r.bpp!r},{p},"
                f"{r.beta!r},{r.qp},{r.alpha!r},{self.termination}"
            )
        return rows


def run_admm(
    k: KSpace,
    cfg: AdmmConfig,
    codec: CodecParams,
    ground_truth: np.ndarray | None = None,
) -> AdmmResult:
    """Alternate codec applications with TV-regularized data-fit solves.

    The codec is driven at ``cfg.qp`` (overriding ``codec.qp``) so the
    coupling weight and the quantization level always refer to the same
    operating point.  On divergence the iterate with the smallest consensus
    gap seen so far is returned; otherwise the last one.

    ``ground_truth`` only feeds the optional per-iteration PSNR column of
    the trace and never influences the optimization.
    """
    codec = codec.with_qp(cfg.qp)
    beta = cfg.beta
    n = k.mask.width * k.mask.height

    if cfg.init == "zero-filled":
        z_hat = zero_filled_recon(k)
    elif cfg.init == "tv-recon":
        z_hat = tv_reconstruct(
            k, cfg.alpha, max_iters=cfg.solver_max_iters, rel_tol=cfg.solver_rel_tol
        )
    else:
        z_hat = np.ascontiguousarray(cfg.init_image, dtype=np.float64).copy()
    u = np.zeros_like(z_hat)

    rule = StoppingRule(cfg.conv_eps, cfg.div_eps, cfg.conv_window)
    trace: list[IterationRecord] = []
    best: tuple[float, Bitstream, np.ndarray] | None = None
    current: tuple[Bitstream, np.ndarray] | None = None
    termination = TERMINATED_MAX_ITERS

    for t in range(1, cfg.max_iters + 1):
        z_tilde = z_hat - u
        bitstream = compress(z_tilde, codec)
        v_hat = decompress(bitstream, codec)

        v_tilde = v_hat + u
        spec = TvSubproblemSpec(
            k=k,
            alpha=cfg.alpha,
            beta=beta,
            anchor=v_tilde,
            max_iters=cfg.solver_max_iters,
            rel_tol=cfg.solver_rel_tol,
        )
        try:
            z_hat, _ = solve_tv_subproblem(spec, z_hat)
        except FloatingPointError:
            termination = TERMINATED_DIVERGED
            break

        u = u + (v_hat - z_hat)
        w = kernels.abs_diff_sum(v_hat, z_hat)

        current = (bitstream, v_hat)
        if math.isfinite(w) and (best is None or w < best[0]):
            best = (w, bitstream, v_hat)

        trace.append(
            IterationRecord(
                t=t,
                w=float(w),
                bit_count=bitstream.bit_count,
                bpp=bitstream.bit_count / n,
                psnr=None if ground_truth is None else psnr(ground_truth, v_hat, codec.peak),
                beta=beta,
                qp=cfg.qp,
                alpha=cfg.alpha,
                v_hat=v_hat.copy() if cfg.keep_iterates else None,
                z_hat=z_hat.copy() if cfg.keep_iterates else None,
                u=u.copy() if cfg.keep_iterates else None,
            )
        )

        if not (np.isfinite(z_hat).all() and math.isfinite(w)):
            termination = TERMINATED_DIVERGED
            break
        verdict = rule.observe(w)
        if verdict is not None:
            termination = verdict
            break

    if current is None and best is None:
        raise FloatingPointError("ADMM produced no finite iterate")
    if termination == TERMINATED_DIVERGED and best is not None:
        bitstream, image = best[1], best[2]
    else:
        bitstream, image = current  # type: ignore[misc]
    return AdmmResult(
        final_bitstream=bitstream,
        final_image=image,
        termination=termination,
        trace=trace,
    )


def run_decoupled(
    k: KSpace,
    alpha: float,
    codec: CodecParams,
    solver_max_iters: int = 500,
    solver_rel_tol: float = 1e-6,
    ground_truth: np.ndarray | None = None,
) -> AdmmResult:
    """Reconstruct first, compress once: the sequential-pipeline baseline.

    ``alpha == 0`` uses the zero-filled reconstruction, otherwise the
    TV-regularized one.
    """
    if alpha == 0:
        recon = zero_filled_recon(k)
    else:
        recon = tv_reconstruct(k, alpha, max_iters=solver_max_iters, rel_tol=solver_rel_tol)
    bitstream = compress(recon, codec)
    image = decompress(bitstream, codec)
    n = k.mask.width * k.mask.height
    record = IterationRecord(
        t=1,
        w=kernels.abs_diff_sum(image, recon),
        bit_count=bitstream.bit_count,
        bpp=bitstream.bit_count / n,
        psnr=None if ground_truth is None else psnr(ground_truth, image, codec.peak),
        beta=0.0,
        qp=codec.qp,
        alpha=alpha,
    )
    return AdmmResult(
        final_bitstream=bitstream,
        final_image=image,
        termination=TERMINATED_CONVERGED,
        trace=[record],
    )
