"""Deterministic synthetic test images in the [0, 255] display range."""

from __future__ import annotations

import numpy as np

PHANTOM_KINDS = ("shepp-logan", "piecewise-blobs")

# (x0, y0, a, b, angle_deg, additive intensity) on the [-1, 1]^2 grid
_SHEPP_LOGAN = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
]


def _ellipse_mask(xx, yy, x0, y0, a, b, angle_deg):
    t = np.deg2rad(angle_deg)
    xr = (xx - x0) * np.cos(t) + (yy - y0) * np.sin(t)
    yr = -(xx - x0) * np.sin(t) + (yy - y0) * np.cos(t)
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def _shepp_logan(size: int) -> np.ndarray:
    coords = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(coords, coords)
    img = np.zeros((size, size))
    for x0, y0, a, b, ang, value in _SHEPP_LOGAN:
        img[_ellipse_mask(xx, yy, x0, y0, a, b, ang)] += value
    return np.clip(img, 0.0, 1.0) * 255.0


def _piecewise_blobs(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    coords = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(coords, coords)
    img = np.full((size, size), float(rng.integers(10, 60)))
    for _ in range(12):
        x0, y0 = rng.uniform(-0.8, 0.8, 2)
        a, b = rng.uniform(0.05, 0.45, 2)
        ang = rng.uniform(0.0, 180.0)
        value = float(rng.integers(0, 256))
        img[_ellipse_mask(xx, yy, x0, y0, a, b, ang)] = value
    return np.clip(img, 0.0, 255.0)


def phantom(kind: str, size: int, seed: int | None = None) -> np.ndarray:
    """Generate a piecewise-constant test image.

    ``shepp-logan`` ignores the seed and regenerates bit-identically;
    ``piecewise-blobs`` places seeded random constant-intensity ellipses.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")
    if size < 32:
        raise ValueError(f"phantom size must be >= 32, got {size}")
    if kind == "shepp-logan":
        return _shepp_logan(size)
    return _piecewise_blobs(size, 0 if seed is None else seed)
