"""Grayscale image I/O: 8-bit PNG and binary PGM (P5).

Images are plain 2-D float64 arrays throughout the package.  RGB inputs
are converted to luminance on read.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError


def ensure_image(x: np.ndarray, min_side: int = 8) -> np.ndarray:
    """Validate and return an image as a C-contiguous float64 array.

    Raises ValueError when ``x`` is not 2-D, smaller than ``min_side`` in
    either dimension, or contains non-finite values.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {x.shape}")
    h, w = x.shape
    if h < min_side or w < min_side:
        raise ValueError(f"image must be at least {min_side}x{min_side}, got {h}x{w}")
    if not np.isfinite(x).all():
        raise ValueError("image contains non-finite values")
    return x


def to_uint8(x: np.ndarray, peak: float = 255.0) -> np.ndarray:
    """Clip and round to the 8-bit range [0, peak]."""
    return np.clip(np.rint(x), 0.0, float(peak)).astype(np.uint8)


def write_pgm(path: str | Path, img: np.ndarray, peak: int = 255) -> None:
    """Write a binary (P5) PGM file."""
    data = to_uint8(img, peak)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{int(peak)}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary (P5) PGM file into a float64 array."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval, each possibly comment-separated
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise DataError(f"{path}: 16-bit PGM not supported")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    if pixels.size != w * h:
        raise DataError(f"{path}: truncated PGM payload")
    return pixels.reshape(h, w).astype(np.float64)


def write_png(path: str | Path, img: np.ndarray, peak: float = 255.0) -> None:
    """Write an 8-bit grayscale PNG."""
    from PIL import Image as PILImage

    PILImage.fromarray(to_uint8(img, peak), mode="L").save(str(path), format="PNG")


def read_png(path: str | Path) -> np.ndarray:
    """Read a PNG as grayscale float64; RGB inputs are luminance-converted."""
    from PIL import Image as PILImage

    try:
        with PILImage.open(str(path)) as im:
            if im.mode != "L":
                im = im.convert("L")
            return np.asarray(im, dtype=np.float64)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: cannot decode PNG ({exc})") from exc


def read_image(path: str | Path) -> np.ndarray:
    """Read a grayscale image, sniffing PGM vs PNG from the magic bytes."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return read_pgm(path)
    return read_png(path)


def write_image(path: str | Path, img: np.ndarray, peak: float = 255.0) -> None:
    """Write a grayscale image; the suffix selects PGM vs PNG."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, img, int(peak))
    else:
        write_png(path, img, peak)
