"""Subsampled-Fourier acquisition model for compressed-sensing MRI.

The measurement operator maps a real image through the unitary 2-D DFT and
keeps the frequency locations selected by a sampling mask.  Masks live on
the centered spectrum (DC at ``(h//2, w//2)``), which is also how they are
generated, displayed and serialized.  Because images are real-valued, the
adjoint zero-fills, inverse-transforms and keeps the real part; that pair
of operators is exactly adjoint with respect to the real inner product
``Re<a, b>``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DataError
from .imageio import ensure_image, read_pgm, write_pgm

MASK_PATTERNS = ("uniform-random", "center-weighted-random", "cartesian-lines")

_KSPACE_MAGIC = b"JRKSPACE"
_KSPACE_VERSION = 1


@dataclass
class SamplingMask:
    """Binary sampling pattern on the centered Fourier grid.

    ``kept`` is a (height, width) boolean array; ``kept_count`` is M and
    ``acceleration`` reports N/M exactly as a Fraction.
    """

    width: int
    height: int
    kept: np.ndarray
    pattern_kind: str = "custom"
    seed: int = 0
    _flat_idx: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.kept = np.ascontiguousarray(self.kept, dtype=bool)
        if self.kept.shape != (self.height, self.width):
            raise ValueError(
                f"mask array shape {self.kept.shape} does not match "
                f"{self.height}x{self.width}"
            )
        m = int(self.kept.sum())
        if not 1 <= m <= self.width * self.height:
            raise ValueError("mask must keep between 1 and N entries")

    @property
    def kept_count(self) -> int:
        return int(self.kept.sum())

    @property
    def acceleration(self) -> Fraction:
        return Fraction(self.width * self.height, self.kept_count)

    def flat_indices(self) -> np.ndarray:
        """Row-major indices of the kept entries (cached)."""
        if self._flat_idx is None:
            self._flat_idx = np.flatnonzero(self.kept)
        return self._flat_idx


@dataclass
class KSpace:
    """Acquired measurements: kept-sample values plus their mask."""

    mask: SamplingMask
    samples: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size != self.mask.kept_count:
            raise ValueError(
                f"expected {self.mask.kept_count} samples, got {self.samples.shape}"
            )
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.mask.height, self.mask.width)


def make_mask(
    width: int,
    height: int,
    pattern_kind: str = "center-weighted-random",
    acceleration: float | Fraction = 4,
    seed: int = 0,
) -> SamplingMask:
    """Generate a sampling mask with ``round(N / acceleration)`` kept entries.

    Patterns:
      * ``uniform-random``: i.i.d. locations without replacement.
      * ``center-weighted-random``: a fully sampled central square of side
        ``ceil(sqrt(M) / 2)``, remainder uniform at random.
      * ``cartesian-lines``: whole rows; the kept count is rounded to a
        multiple of the width, so the achieved acceleration can differ
        slightly from the request (``mask.acceleration`` is always exact).

    The DC location ``(height//2, width//2)`` is kept by every pattern.
    """
    if pattern_kind not in MASK_PATTERNS:
        raise ValueError(f"unknown pattern {pattern_kind!r}; expected one of {MASK_PATTERNS}")
    if acceleration < 1:
        raise ValueError("acceleration must be >= 1")
    n = width * height
    m = round(Fraction(n) / Fraction(acceleration))
    if m < 1:
        raise ValueError("acceleration leaves no samples to keep")
    m = min(m, n)

    rng = np.random.default_rng(seed)
    kept = np.zeros((height, width), dtype=bool)
    dc = (height // 2, width // 2)

    if pattern_kind == "cartesian-lines":
        rows = max(1, round(m / width))
        kept[dc[0], :] = True
        if rows > 1:
            others = np.setdiff1d(np.arange(height), [dc[0]])
            pick = rng.choice(others, size=min(rows - 1, others.size), replace=False)
            kept[pick, :] = True
    elif pattern_kind == "uniform-random":
        kept[dc] = True
        flat = np.arange(n)
        flat = flat[flat != dc[0] * width + dc[1]]
        pick = rng.choice(flat, size=m - 1, replace=False)
        kept.ravel()[pick] = True
    else:  # center-weighted-random
        side = int(np.ceil(np.sqrt(m) / 2.0))
        side = min(side, height, width)
        r0 = max(0, dc[0] - side // 2)
        c0 = max(0, dc[1] - side // 2)
        kept[r0 : r0 + side, c0 : c0 + side] = True
        kept[dc] = True
        have = int(kept.sum())
        if have > m:
            # tiny M: shrink back to exactly m keeping DC
            extra = np.flatnonzero(kept)
            extra = extra[extra != dc[0] * width + dc[1]]
            drop = rng.choice(extra, size=have - m, replace=False)
            kept.ravel()[drop] = False
        elif have < m:
            free = np.flatnonzero(~kept)
            pick = rng.choice(free, size=m - have, replace=False)
            kept.ravel()[pick] = True

    return SamplingMask(width, height, kept, pattern_kind, seed)


def forward(x: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Unitary 2-D DFT followed by mask selection; returns M complex samples.

    Kept samples are ordered row-major over the centered spectrum.
    """
    if x.shape != (mask.height, mask.width):
        raise ValueError(f"image shape {x.shape} does not match mask {mask.height}x{mask.width}")
    spectrum = np.fft.fftshift(np.fft.fft2(x, norm="ortho"))
    return spectrum.ravel()[mask.flat_indices()]


def adjoint(y: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Zero-fill, inverse unitary DFT, take the real part.

    This is the exact adjoint of :func:`forward` restricted to real images.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim != 1 or y.size != mask.kept_count:
        raise ValueError(f"expected {mask.kept_count} samples, got shape {y.shape}")
    grid = np.zeros(mask.height * mask.width, dtype=np.complex128)
    grid[mask.flat_indices()] = y
    grid = grid.reshape(mask.height, mask.width)
    return np.fft.ifft2(np.fft.ifftshift(grid), norm="ortho").real


def acquire(
    x: np.ndarray,
    mask: SamplingMask,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> KSpace:
    """Measure ``x`` through the mask with i.i.d. complex Gaussian noise.

    Real and imaginary noise parts are each N(0, sigma^2 / 2) so the
    per-sample variance E|eta|^2 equals ``noise_sigma**2``.  Deterministic
    for a fixed seed.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    x = ensure_image(x)
    samples = forward(x, mask)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        scale = noise_sigma / np.sqrt(2.0)
        noise = rng.normal(0.0, scale, samples.size) + 1j * rng.normal(
            0.0, scale, samples.size
        )
        samples = samples + noise
    return KSpace(mask=mask, samples=samples, noise_sigma=noise_sigma)


def zero_filled_recon(k: KSpace) -> np.ndarray:
    """Reconstruction with missing frequencies set to zero."""
    return adjoint(k.samples, k.mask)


# --------------------------------------------------------------------------
# serialization


def write_mask_text(path: str | Path, mask: SamplingMask) -> None:
    """Plain-text mask: header ``MASK <width> <height>`` then 0/1 rows."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"MASK {mask.width} {mask.height}\n")
        for row in mask.kept:
            fh.write("".join("1" if v else "0" for v in row) + "\n")


def read_mask_text(path: str | Path) -> SamplingMask:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines or not lines[0].startswith("MASK"):
        raise DataError(f"{path}: missing MASK header")
    parts = lines[0].split()
    if len(parts) != 3:
        raise DataError(f"{path}: malformed MASK header")
    width, height = int(parts[1]), int(parts[2])
    rows = []
    for line in lines[1:]:
        line = line.replace(" ", "").strip()
        if not line:
            continue
        if len(line) != width or set(line) - {"0", "1"}:
            raise DataError(f"{path}: malformed mask row {line!r}")
        rows.append([c == "1" for c in line])
    if len(rows) != height:
        raise DataError(f"{path}: expected {height} rows, found {len(rows)}")
    return SamplingMask(width, height, np.array(rows, dtype=bool))


def write_mask_pgm(path: str | Path, mask: SamplingMask) -> None:
    """Mask as an 8-bit PGM: kept locations are 255, dropped are 0."""
    write_pgm(path, mask.kept.astype(np.float64) * 255.0)


def read_mask_pgm(path: str | Path) -> SamplingMask:
    arr = read_pgm(path)
    h, w = arr.shape
    return SamplingMask(w, h, arr > 0)


def write_kspace(path: str | Path, k: KSpace) -> None:
    """Little-endian binary container for measurements plus their mask.

    Layout: 16-byte magic/version header; u32 width, u32 height, f64
    noise_sigma, u64 M; the mask row-major bit-packed; M (re, im) float64
    pairs.
    """
    mask = k.mask
    header = _KSPACE_MAGIC + struct.pack("<H", _KSPACE_VERSION)
    header += b"\x00" * (16 - len(header))
    packed = np.packbits(mask.kept.ravel().astype(np.uint8))
    inter = np.empty(2 * k.samples.size, dtype="<f8")
    inter[0::2] = k.samples.real
    inter[1::2] = k.samples.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<IIdQ", mask.width, mask.height, k.noise_sigma, k.samples.size))
        fh.write(packed.tobytes())
        fh.write(inter.tobytes())


def read_kspace(path: str | Path) -> KSpace:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[: len(_KSPACE_MAGIC)] != _KSPACE_MAGIC:
        raise DataError(f"{path}: not a k-space file")
    (version,) = struct.unpack_from("<H", raw, len(_KSPACE_MAGIC))
    if version != _KSPACE_VERSION:
        raise DataError(f"{path}: unsupported k-space version {version}")
    pos = 16
    width, height, sigma, m = struct.unpack_from("<IIdQ", raw, pos)
    pos += struct.calcsize("<IIdQ")
    n = width * height
    nbytes = (n + 7) // 8
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, count=nbytes, offset=pos))
    kept = bits[:n].astype(bool).reshape(height, width)
    pos += nbytes
    inter = np.frombuffer(raw, dtype="<f8", count=2 * m, offset=pos)
    if inter.size != 2 * m:
        raise DataError(f"{path}: truncated sample payload")
    samples = inter[0::2] + 1j * inter[1::2]
    mask = SamplingMask(width, height, kept)
    if mask.kept_count != m:
        raise DataError(f"{path}: sample count does not match mask")
    return KSpace(mask=mask, samples=samples, noise_sigma=float(sigma))
