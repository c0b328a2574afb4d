"""Hot inner-loop kernels with optional numba acceleration.

Every kernel ships in two flavours: a vectorized (or plain-Python) numpy
implementation and a numba ``@njit`` compiled one.  The active backend is
picked once at import time; set ``JOINTREC_NO_NUMBA=1`` to force the numpy
path (the same path is used automatically when numba is not installed).

``benchmarks/bench_kernels.py`` compares the two backends head to head.
"""

from __future__ import annotations

import os

import numpy as np

_disabled = os.environ.get("JOINTREC_NO_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on",
}

if _disabled:
    njit = None
else:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None

HAS_NUMBA = njit is not None
BACKEND = "numba" if HAS_NUMBA else "numpy"


# --------------------------------------------------------------------------
# discrete gradient / divergence
#
# Forward differences with a Neumann boundary: the last difference along
# each axis is zero.  ``divergence`` is the exact negative adjoint, i.e.
# <grad(x), g> == -<x, divergence(g)> holds in exact arithmetic.

def grad_field_numpy(x: np.ndarray) -> np.ndarray:
    """Forward differences of a 2-D array, shape (2, h, w): [gx, gy]."""
    h, w = x.shape
    g = np.zeros((2, h, w), dtype=np.float64)
    g[0, :, : w - 1] = x[:, 1:] - x[:, : w - 1]
    g[1, : h - 1, :] = x[1:, :] - x[: h - 1, :]
    return g


def _grad_field_loops(x):
    h, w = x.shape
    g = np.zeros((2, h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w - 1):
            g[0, i, j] = x[i, j + 1] - x[i, j]
    for i in range(h - 1):
        for j in range(w):
            g[1, i, j] = x[i + 1, j] - x[i, j]
    return g


def divergence_numpy(g: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`grad_field_numpy`, shape (h, w)."""
    _, h, w = g.shape
    d = np.zeros((h, w), dtype=np.float64)
    d[:, 0] += g[0, :, 0]
    d[:, 1 : w - 1] += g[0, :, 1 : w - 1] - g[0, :, : w - 2]
    d[:, w - 1] -= g[0, :, w - 2]
    d[0, :] += g[1, 0, :]
    d[1 : h - 1, :] += g[1, 1 : h - 1, :] - g[1, : h - 2, :]
    d[h - 1, :] -= g[1, h - 2, :]
    return d


def _divergence_loops(g):
    h = g.shape[1]
    w = g.shape[2]
    d = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            if j == 0:
                dx = g[0, i, 0]
            elif j == w - 1:
                dx = -g[0, i, w - 2]
            else:
                dx = g[0, i, j] - g[0, i, j - 1]
            if i == 0:
                dy = g[1, 0, j]
            elif i == h - 1:
                dy = -g[1, h - 2, j]
            else:
                dy = g[1, i, j] - g[1, i - 1, j]
            d[i, j] = dx + dy
    return d


def tv_sum_numpy(x: np.ndarray) -> float:
    g = grad_field_numpy(x)
    return float(np.sqrt(g[0] * g[0] + g[1] * g[1]).sum())


def _tv_sum_loops(x):
    h, w = x.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            gx = x[i, j + 1] - x[i, j] if j < w - 1 else 0.0
            gy = x[i + 1, j] - x[i, j] if i < h - 1 else 0.0
            total += np.sqrt(gx * gx + gy * gy)
    return total


def project_pairs_numpy(g: np.ndarray, radius: float) -> np.ndarray:
    """Project each (gx, gy) pair onto the Euclidean ball of ``radius``."""
    if radius <= 0.0:
        return np.zeros_like(g)
    nrm = np.sqrt(g[0] * g[0] + g[1] * g[1])
    factor = radius / np.maximum(radius, nrm)
    return g * factor


def _project_pairs_loops(g, radius):
    out = np.zeros_like(g)
    if radius <= 0.0:
        return out
    h = g.shape[1]
    w = g.shape[2]
    for i in range(h):
        for j in range(w):
            a = g[0, i, j]
            b = g[1, i, j]
            nrm = np.sqrt(a * a + b * b)
            factor = radius / max(radius, nrm)
            out[0, i, j] = a * factor
            out[1, i, j] = b * factor
    return out


def abs_diff_sum_numpy(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).sum())


def _abs_diff_sum_loops(a, b):
    total = 0.0
    fa = a.ravel()
    fb = b.ravel()
    for i in range(fa.shape[0]):
        total += abs(fa[i] - fb[i])
    return total


# --------------------------------------------------------------------------
# (run, level) token coder used by the reference codec.
#
# Per 8x8 block, zigzag-ordered quantizer levels are emitted as
# (zero-run, level) pairs followed by an end-of-block marker.  Runs use
# unsigned Exp-Golomb codes with the value 64 reserved for end-of-block;
# levels map sign into the LSB of an unsigned Exp-Golomb code.  The
# functions are self-contained (no helper calls) so numba can cache them.

RUN_EOB = 64
# worst case per coefficient: ue(run) <= 13 bits plus ue(level) <= 35 bits
BITS_PER_COEFF_BOUND = 48


def _encode_rle_bits_src(levels, bits):
    """Write token bits for (nblocks, 64) int64 levels; return bit count."""
    pos = 0
    nblocks = levels.shape[0]
    for blk in range(nblocks):
        run = 0
        for i in range(64):
            v = levels[blk, i]
            if v == 0:
                run += 1
                continue
            # unsigned exp-golomb of the run
            code = run + 1
            nbits = 0
            t = code
            while t > 0:
                nbits += 1
                t >>= 1
            for _ in range(nbits - 1):
                bits[pos] = 0
                pos += 1
            for k in range(nbits - 1, -1, -1):
                bits[pos] = (code >> k) & 1
                pos += 1
            # signed level: fold sign into the LSB
            if v > 0:
                m = 2 * (v - 1)
            else:
                m = 2 * (-v - 1) + 1
            code = m + 1
            nbits = 0
            t = code
            while t > 0:
                nbits += 1
                t >>= 1
            for _ in range(nbits - 1):
                bits[pos] = 0
                pos += 1
            for k in range(nbits - 1, -1, -1):
                bits[pos] = (code >> k) & 1
                pos += 1
            run = 0
        # end of block: run symbol 64
        code = RUN_EOB + 1
        nbits = 0
        t = code
        while t > 0:
            nbits += 1
            t >>= 1
        for _ in range(nbits - 1):
            bits[pos] = 0
            pos += 1
        for k in range(nbits - 1, -1, -1):
            bits[pos] = (code >> k) & 1
            pos += 1
    return pos


def _decode_rle_bits_src(bits, nbits, nblocks):
    """Inverse of the token writer; raises ValueError on malformed input."""
    out = np.zeros((nblocks, 64), dtype=np.int64)
    pos = 0
    for blk in range(nblocks):
        i = 0
        while True:
            zeros = 0
            while pos < nbits and bits[pos] == 0:
                zeros += 1
                pos += 1
            if pos + zeros + 1 > nbits:
                raise ValueError("truncated bitstream")
            val = 0
            for _ in range(zeros + 1):
                val = (val << 1) | bits[pos]
                pos += 1
            run = val - 1
            if run == RUN_EOB:
                break
            if run < 0 or run > 63:
                raise ValueError("corrupt run length")
            zeros = 0
            while pos < nbits and bits[pos] == 0:
                zeros += 1
                pos += 1
            if pos + zeros + 1 > nbits:
                raise ValueError("truncated bitstream")
            val = 0
            for _ in range(zeros + 1):
                val = (val << 1) | bits[pos]
                pos += 1
            m = val - 1
            if m % 2 == 0:
                level = m // 2 + 1
            else:
                level = -(m // 2 + 1)
            i += run
            if i > 63:
                raise ValueError("corrupt coefficient index")
            out[blk, i] = level
            i += 1
    return out


encode_rle_bits_numpy = _encode_rle_bits_src
decode_rle_bits_numpy = _decode_rle_bits_src

if HAS_NUMBA:
    grad_field_numba = njit(cache=True)(_grad_field_loops)
    divergence_numba = njit(cache=True)(_divergence_loops)
    tv_sum_numba = njit(cache=True)(_tv_sum_loops)
    project_pairs_numba = njit(cache=True)(_project_pairs_loops)
    abs_diff_sum_numba = njit(cache=True)(_abs_diff_sum_loops)
    encode_rle_bits_numba = njit(cache=True)(_encode_rle_bits_src)
    decode_rle_bits_numba = njit(cache=True)(_decode_rle_bits_src)

    grad_field = grad_field_numba
    divergence = divergence_numba
    tv_sum = tv_sum_numba
    project_pairs = project_pairs_numba
    abs_diff_sum = abs_diff_sum_numba
    encode_rle_bits = encode_rle_bits_numba
    decode_rle_bits = decode_rle_bits_numba
else:
    grad_field_numba = None
    divergence_numba = None
    tv_sum_numba = None
    project_pairs_numba = None
    abs_diff_sum_numba = None
    encode_rle_bits_numba = None
    decode_rle_bits_numba = None

    grad_field = grad_field_numpy
    divergence = divergence_numpy
    tv_sum = tv_sum_numpy
    project_pairs = project_pairs_numpy
    abs_diff_sum = abs_diff_sum_numpy
    encode_rle_bits = encode_rle_bits_numpy
    decode_rle_bits = decode_rle_bits_numpy
