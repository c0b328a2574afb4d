"""PSNR, rate-distortion curves over QP sweeps, and BD-PSNR comparison."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import KSpace
from .codec import CodecParams
from .errors import DataError

DEFAULT_QP_LIST = tuple(range(4, 50, 3))  # 4, 7, ..., 49: 16 points
HIGH_RATE_QPS = (4, 7, 13, 19)

SWEEP_METHODS = ("joint", "decoupled", "none")


def psnr(x: np.ndarray, v: np.ndarray, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {v.shape}")
    mse = float(np.mean((x - v) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class RDPoint:
    """One operating point: bits per pixel, PSNR in dB, and its QP."""

    bpp: float
    psnr: float
    qp: int


@dataclass
class RDCurve:
    """Rate-distortion curve; ``ref_psnr`` holds a compression-free line.

    Points are kept sorted by ascending bpp; duplicate rates keep the
    best-PSNR point so the sequence is strictly increasing.
    """

    label: str
    points: list[RDPoint] = field(default_factory=list)
    ref_psnr: float | None = None

    def __post_init__(self):
        self.points = self._normalized(self.points)

    @staticmethod
    def _normalized(points: list[RDPoint]) -> list[RDPoint]:
        out: dict[float, RDPoint] = {}
        for p in points:
            if p.bpp <= 0:
                raise ValueError(f"bpp must be positive, got {p.bpp}")
            cur = out.get(p.bpp)
            if cur is None or p.psnr > cur.psnr:
                out[p.bpp] = p
        return [out[b] for b in sorted(out)]

    def add(self, point: RDPoint) -> None:
        self.points = self._normalized(self.points + [point])

    def to_csv(self, path: str | Path) -> None:
        lines = ["qp,bpp,psnr"]
        for p in self.points:
            lines.append(f"{p.qp},{p.bpp!r},{p.psnr!r}")
        if self.ref_psnr is not None:
            lines.append(f",,{self.ref_psnr!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")

    @classmethod
    def from_csv(cls, path: str | Path, label: str | None = None) -> "RDCurve":
        lines = Path(path).read_text(encoding="ascii").splitlines()
        if not lines or lines[0].strip() != "qp,bpp,psnr":
            raise DataError(f"{path}: expected header 'qp,bpp,psnr'")
        points: list[RDPoint] = []
        ref = None
        for line in lines[1:]:
            if not line.strip():
                continue
            qp_s, bpp_s, psnr_s = (c.strip() for c in line.split(","))
            if not qp_s and not bpp_s:
                ref = float(psnr_s)
                continue
            points.append(RDPoint(bpp=float(bpp_s), psnr=float(psnr_s), qp=int(qp_s)))
        return cls(label=label or Path(path).stem, points=points, ref_psnr=ref)


def _fit_log_rate_poly(curve: RDCurve) -> tuple[np.ndarray, float, float]:
    pts = [p for p in curve.points if math.isfinite(p.psnr)]
    if len(pts) < len(curve.points):
        warnings.warn(
            f"curve {curve.label!r}: dropping {len(curve.points) - len(pts)} "
            "non-finite PSNR point(s) from the fit",
            stacklevel=3,
        )
    if len(pts) < 4:
        raise ValueError(
            f"curve {curve.label!r} has {len(pts)} usable points; need at least 4"
        )
    log_rate = np.log10([p.bpp for p in pts])
    quality = np.array([p.psnr for p in pts])
    coeffs = np.polyfit(log_rate, quality, 3)
    return coeffs, float(log_rate.min()), float(log_rate.max())


def bd_psnr(test: RDCurve, reference: RDCurve) -> float:
    """Average vertical gap (dB) between two curves, positive = test wins.

    Cubic least-squares fits of PSNR against log10 rate, integrated
    analytically over the common log-rate interval.
    """
    c_test, lo_t, hi_t = _fit_log_rate_poly(test)
    c_ref, lo_r, hi_r = _fit_log_rate_poly(reference)
    lo = max(lo_t, lo_r)
    hi = min(hi_t, hi_r)
    if hi <= lo:
        raise ValueError(
            f"curves {test.label!r} and {reference.label!r} have no overlapping rate range"
        )
    int_test = np.polyval(np.polyint(c_test), [lo, hi])
    int_ref = np.polyval(np.polyint(c_ref), [lo, hi])
    area = (int_test[1] - int_test[0]) - (int_ref[1] - int_ref[0])
    return float(area / (hi - lo))


def _high_rate_subset(curve: RDCurve) -> RDCurve:
    pts = [p for p in curve.points if p.qp in HIGH_RATE_QPS]
    if len(pts) < 4:
        raise ValueError(
            f"curve {curve.label!r} has only {len(pts)} high-rate points "
            f"(need QPs {HIGH_RATE_QPS})"
        )
    return RDCurve(label=f"{curve.label}@high", points=pts)


def bd_psnr_highrate(test: RDCurve, reference: RDCurve) -> float:
    """BD-PSNR restricted to the high-rate QP subset (4, 7, 13, 19)."""
    return bd_psnr(_high_rate_subset(test), _high_rate_subset(reference))


def sweep(
    k: KSpace,
    ground_truth: np.ndarray,
    method: str,
    alpha: float,
    qps: list[int] | tuple[int, ...] = DEFAULT_QP_LIST,
    codec: CodecParams | None = None,
    beta_override: float | None = None,
    admm_max_iters: int = 40,
    solver_max_iters: int = 500,
    solver_rel_tol: float = 1e-6,
    workers: int = 1,
    label: str | None = None,
    on_error: str = "raise",
) -> RDCurve:
    """Rate-distortion curve of one method over a QP list.

    ``method`` is ``joint`` (the ADMM loop), ``decoupled`` (reconstruct
    then compress once) or ``none`` (no compression: the returned curve has
    no points, only ``ref_psnr``).  Cells run on up to ``workers`` threads;
    results are assembled in QP order so scheduling never changes the
    output.  With ``on_error="skip"`` failing cells are dropped instead of
    raised (annotated with the offending QP either way).
    """
    curve, _, failures = sweep_detailed(
        k,
        ground_truth,
        method,
        alpha,
        qps,
        codec,
        beta_override=beta_override,
        admm_max_iters=admm_max_iters,
        solver_max_iters=solver_max_iters,
        solver_rel_tol=solver_rel_tol,
        workers=workers,
        label=label,
    )
    if failures and on_error == "raise":
        qp, exc = next(iter(sorted(failures.items())))
        raise RuntimeError(f"sweep cell failed at qp={qp}: {exc}") from exc
    return curve


def sweep_detailed(
    k: KSpace,
    ground_truth: np.ndarray,
    method: str,
    alpha: float,
    qps: list[int] | tuple[int, ...] = DEFAULT_QP_LIST,
    codec: CodecParams | None = None,
    beta_override: float | None = None,
    admm_max_iters: int = 40,
    solver_max_iters: int = 500,
    solver_rel_tol: float = 1e-6,
    workers: int = 1,
    label: str | None = None,
):
    """Like :func:`sweep` but also returns per-QP results and failures."""
    from .acquisition import zero_filled_recon
    from .admm import AdmmConfig, run_admm, run_decoupled
    from .tv import tv_reconstruct

    if method not in SWEEP_METHODS:
        raise ValueError(f"method must be one of {SWEEP_METHODS}")
    if codec is None:
        codec = CodecParams()
    name = label or (f"{method}-a{alpha:g}" if method != "none" else f"none-a{alpha:g}")

    if method == "none":
        if alpha == 0:
            recon = zero_filled_recon(k)
        else:
            recon = tv_reconstruct(
                k, alpha, max_iters=solver_max_iters, rel_tol=solver_rel_tol
            )
        value = psnr(ground_truth, recon, codec.peak)
        return RDCurve(label=name, ref_psnr=value), {}, {}

    if not qps:
        raise ValueError("qp list must not be empty")

    n = k.mask.width * k.mask.height

    def run_cell(qp: int):
        if method == "joint":
            cfg = AdmmConfig(
                qp=qp,
                alpha=alpha,
                beta_override=beta_override,
                max_iters=admm_max_iters,
                solver_max_iters=solver_max_iters,
                solver_rel_tol=solver_rel_tol,
            )
            return run_admm(k, cfg, codec, ground_truth=ground_truth)
        return run_decoupled(
            k,
            alpha,
            codec.with_qp(qp),
            solver_max_iters=solver_max_iters,
            solver_rel_tol=solver_rel_tol,
            ground_truth=ground_truth,
        )

    results: dict[int, object] = {}
    failures: dict[int, Exception] = {}
    qp_list = list(qps)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {qp: pool.submit(run_cell, qp) for qp in qp_list}
        for qp, fut in futures.items():
            try:
                results[qp] = fut.result()
            except Exception as exc:  # annotated per cell
                failures[qp] = exc
    else:
        for qp in qp_list:
            try:
                results[qp] = run_cell(qp)
            except Exception as exc:
                failures[qp] = exc

    points = []
    for qp in sorted(results):
        res = results[qp]
        points.append(
            RDPoint(
                bpp=res.final_bitstream.bit_count / n,
                psnr=psnr(ground_truth, res.final_image, codec.peak),
                qp=qp,
            )
        )
    return RDCurve(label=name, points=points), results, failures


def write_bd_report(
    path: str | Path, rows: list[tuple[str, str, str, float]]
) -> None:
    """CSV report: one row per (test, reference, range, bd_psnr_db)."""
    lines = ["test,reference,range,bd_psnr_db"]
    for test, ref, rng, value in rows:
        lines.append(f"{test},{ref},{rng},{value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
