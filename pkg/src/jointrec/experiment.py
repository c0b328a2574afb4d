"""Experiment configs and the end-to-end runner.

A config (INI file) names an input image (or phantom, or stored
measurements), a sampling mask, a codec, and a list of methods; the runner
acquires once, sweeps every method over the QP list, and writes a stable
output layout:

    curves/*.csv   one rate-distortion curve per method
    report.csv     BD-PSNR comparisons (all rates and high rates)
    plot.svg       PSNR vs bpp with compression-free reference lines
    images/*.png   reconstructions at selected QPs
    run.log        per-iteration CSV trace of every cell

Everything is seeded, so rerunning a config reproduces the CSV outputs
byte for byte.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import (
    KSpace,
    acquire,
    make_mask,
    read_kspace,
    read_mask_pgm,
    read_mask_text,
)
from .codec import CodecParams
from .errors import ConfigError, DataError
from .evaluation import (
    DEFAULT_QP_LIST,
    RDCurve,
    bd_psnr,
    bd_psnr_highrate,
    sweep_detailed,
    write_bd_report,
)
from .imageio import read_image, write_png
from .phantoms import PHANTOM_KINDS, phantom
from .svgplot import HLine, LineSeries, write_line_chart

_METHOD_COLORS = {"joint": "#1f77b4", "decoupled": "#000000"}
_DASHES = (None, "6 3", "2 2", "8 2 2 2")


@dataclass
class ExperimentConfig:
    """Parsed experiment description; see ``from_ini`` for the file format."""

    output_dir: Path
    methods: list[tuple[str, float]]
    phantom_kind: str | None = "shepp-logan"
    phantom_size: int = 128
    phantom_seed: int = 0
    image_path: Path | None = None
    kspace_path: Path | None = None
    truth_path: Path | None = None
    peak: int = 255
    mask_pattern: str = "center-weighted-random"
    acceleration: float = 4.0
    mask_seed: int = 0
    mask_path: Path | None = None
    noise_sigma: float = 0.0
    noise_seed: int = 0
    codec_kind: str = "reference"
    encode_cmd: str | None = None
    decode_cmd: str | None = None
    scratch_dir: str | None = None
    qp_list: tuple[int, ...] = DEFAULT_QP_LIST
    beta_override: float | None = None
    admm_max_iters: int = 40
    conv_window: int = 3
    conv_eps: float = 0.5
    div_eps: float = 50.0
    solver_max_iters: int = 500
    solver_rel_tol: float = 1e-6
    workers: int = 1
    image_qps: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        for method, alpha in self.methods:
            if method not in ("joint", "decoupled", "none"):
                raise ConfigError(f"unknown method {method!r}")
            if alpha < 0:
                raise ConfigError("alpha must be >= 0")
        for path in (self.image_path, self.kspace_path, self.truth_path, self.mask_path):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"referenced file does not exist: {path}")
        if self.image_path is None and self.kspace_path is None:
            if self.phantom_kind not in PHANTOM_KINDS:
                raise ConfigError(f"unknown phantom kind {self.phantom_kind!r}")
        if self.kspace_path is not None and self.truth_path is None:
            raise ConfigError("a kspace input needs a truth image for PSNR evaluation")

    def codec_params(self, qp: int | None = None) -> CodecParams:
        return CodecParams(
            qp=self.qp_list[0] if qp is None else qp,
            codec_kind=self.codec_kind,
            encode_cmd=self.encode_cmd,
            decode_cmd=self.decode_cmd,
            scratch_dir=self.scratch_dir,
            peak=self.peak,
        )

    @classmethod
    def from_ini(cls, path: str | Path) -> "ExperimentConfig":
        """Load a sectioned key-value config file.

        Sections: ``[input]`` (phantom/size/seed or image or
        kspace+truth, peak), ``[mask]`` (pattern, acceleration, seed, or
        file), ``[noise]`` (sigma, seed), ``[codec]`` (kind, encode_cmd,
        decode_cmd, scratch_dir), ``[methods]`` (method name = comma list
        of alphas), ``[sweep]`` (qp_list, beta_override, workers),
        ``[admm]``/``[solver]`` iteration controls, ``[output]`` (dir,
        image_qps).  Relative paths resolve against the config file.
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.parent

        def resolve(p: str | None) -> Path | None:
            return None if p is None else (base / p).resolve()

        def get(section, key, fallback=None):
            return parser.get(section, key, fallback=fallback) if parser.has_section(section) else fallback

        methods: list[tuple[str, float]] = []
        if parser.has_section("methods"):
            for method, raw in parser.items("methods"):
                for alpha_s in raw.split(","):
                    alpha_s = alpha_s.strip()
                    if alpha_s:
                        methods.append((method, float(alpha_s)))
        if not methods:
            raise ConfigError(f"{path}: [methods] section is empty")

        qp_raw = get("sweep", "qp_list", "default")
        qp_list = parse_qp_list(qp_raw)
        beta_raw = (get("sweep", "beta_override", "") or "").strip()
        image_qp_raw = (get("output", "image_qps", "") or "").strip()
        out_dir = get("output", "dir")
        if not out_dir:
            raise ConfigError(f"{path}: [output] dir is required")

        return cls(
            output_dir=(base / out_dir).resolve(),
            methods=methods,
            phantom_kind=get("input", "phantom", "shepp-logan"),
            phantom_size=int(get("input", "size", "128")),
            phantom_seed=int(get("input", "seed", "0")),
            image_path=resolve(get("input", "image")),
            kspace_path=resolve(get("input", "kspace")),
            truth_path=resolve(get("input", "truth")),
            peak=int(get("input", "peak", "255")),
            mask_pattern=get("mask", "pattern", "center-weighted-random"),
            acceleration=float(get("mask", "acceleration", "4")),
            mask_seed=int(get("mask", "seed", "0")),
            mask_path=resolve(get("mask", "file")),
            noise_sigma=float(get("noise", "sigma", "0")),
            noise_seed=int(get("noise", "seed", "0")),
            codec_kind=get("codec", "kind", "reference"),
            encode_cmd=get("codec", "encode_cmd"),
            decode_cmd=get("codec", "decode_cmd"),
            scratch_dir=get("codec", "scratch_dir"),
            qp_list=qp_list,
            beta_override=float(beta_raw) if beta_raw else None,
            admm_max_iters=int(get("admm", "max_iters", "40")),
            conv_window=int(get("admm", "conv_window", "3")),
            conv_eps=float(get("admm", "conv_eps", "0.5")),
            div_eps=float(get("admm", "div_eps", "50")),
            solver_max_iters=int(get("solver", "max_iters", "500")),
            solver_rel_tol=float(get("solver", "rel_tol", "1e-6")),
            workers=int(get("sweep", "workers", "1")),
            image_qps=tuple(int(v) for v in image_qp_raw.split(",") if v.strip())
            or None,
        )


def parse_qp_list(raw: str) -> tuple[int, ...]:
    """Parse 'default', a comma list, or a start:stop:step range."""
    raw = raw.strip()
    if not raw or raw == "default":
        return DEFAULT_QP_LIST
    if ":" in raw:
        parts = [int(v) for v in raw.split(":")]
        if len(parts) == 2:
            start, stop = parts
            step = 1
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ConfigError(f"bad qp range {raw!r}")
        return tuple(range(start, stop + 1, step))
    return tuple(int(v) for v in raw.split(","))


@dataclass
class ExperimentReport:
    """Where the runner put things, plus the in-memory curves."""

    output_dir: Path
    curves: dict[str, RDCurve] = field(default_factory=dict)
    curve_paths: dict[str, Path] = field(default_factory=dict)
    bd_rows: list[tuple[str, str, str, float]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


def _label(method: str, alpha: float) -> str:
    return f"{method}-a{alpha:g}"


def _prepare_input(cfg: ExperimentConfig) -> tuple[np.ndarray, KSpace]:
    if cfg.kspace_path is not None:
        truth = read_image(cfg.truth_path)
        return truth, read_kspace(cfg.kspace_path)
    if cfg.image_path is not None:
        truth = read_image(cfg.image_path)
    else:
        truth = phantom(cfg.phantom_kind, cfg.phantom_size, cfg.phantom_seed)
    if cfg.mask_path is not None:
        p = Path(cfg.mask_path)
        mask = read_mask_pgm(p) if p.suffix.lower() == ".pgm" else read_mask_text(p)
    else:
        mask = make_mask(
            truth.shape[1],
            truth.shape[0],
            cfg.mask_pattern,
            cfg.acceleration,
            cfg.mask_seed,
        )
    if mask.kept.shape != truth.shape:
        raise DataError(
            f"mask {mask.height}x{mask.width} does not match image {truth.shape}"
        )
    k = acquire(truth, mask, cfg.noise_sigma, cfg.noise_seed)
    return truth, k


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute every method x QP cell and write the output directory."""
    out = Path(cfg.output_dir)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(exist_ok=True)

    truth, k = _prepare_input(cfg)
    report = ExperimentReport(output_dir=out)
    log_lines = ["method,t,w,bit_count,bpp,psnr,beta,qp,alpha,termination"]

    image_qps = cfg.image_qps
    if image_qps is None:
        qs = sorted(cfg.qp_list)
        image_qps = tuple(dict.fromkeys((qs[0], qs[len(qs) // 2], qs[-1])))

    for method, alpha in cfg.methods:
        label = _label(method, alpha)
        curve, results, failures = sweep_detailed(
            k,
            truth,
            method,
            alpha,
            cfg.qp_list,
            cfg.codec_params(),
            beta_override=cfg.beta_override,
            admm_max_iters=cfg.admm_max_iters,
            solver_max_iters=cfg.solver_max_iters,
            solver_rel_tol=cfg.solver_rel_tol,
            workers=cfg.workers,
            label=label,
        )
        report.curves[label] = curve
        curve_path = out / "curves" / f"{label}.csv"
        curve.to_csv(curve_path)
        report.curve_paths[label] = curve_path
        for qp in sorted(results):
            res = results[qp]
            log_lines.extend(res.trace_csv_rows(method=label))
            if qp in image_qps:
                write_png(out / "images" / f"{label}-qp{qp}.png", res.final_image, cfg.peak)
        for qp in sorted(failures):
            msg = f"{label} qp={qp} failed: {failures[qp]}"
            report.failures.append(msg)
            log_lines.append(f"# {msg}")

    for method, alpha in cfg.methods:
        if method != "joint" or alpha == 0:
            continue
        test = report.curves[_label("joint", alpha)]
        for ref_label in (_label("decoupled", alpha), _label("joint", 0.0)):
            ref = report.curves.get(ref_label)
            if ref is None:
                continue
            for rng, fn in (("all", bd_psnr), ("high", bd_psnr_highrate)):
                try:
                    value = fn(test, ref)
                except ValueError as exc:
                    report.failures.append(f"bd {test.label} vs {ref_label} ({rng}): {exc}")
                    continue
                report.bd_rows.append((test.label, ref_label, rng, value))
    write_bd_report(out / "report.csv", report.bd_rows)

    series = []
    hlines = []
    by_method: dict[str, int] = {}
    for label, curve in report.curves.items():
        if curve.ref_psnr is not None:
            hlines.append(HLine(label=label, y=curve.ref_psnr))
            continue
        if not curve.points:
            continue
        method = label.split("-")[0]
        idx = by_method.get(method, 0)
        by_method[method] = idx + 1
        series.append(
            LineSeries(
                label=label,
                xs=[p.bpp for p in curve.points],
                ys=[p.psnr for p in curve.points if np.isfinite(p.psnr)],
                color=_METHOD_COLORS.get(method, "#2ca02c"),
                dash=_DASHES[idx % len(_DASHES)],
            )
        )
    if series or hlines:
        write_line_chart(
            out / "plot.svg",
            series,
            hlines,
            title="PSNR vs rate",
            x_label="bits per pixel",
            y_label="PSNR [dB]",
        )

    (out / "run.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return report
