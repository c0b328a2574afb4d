"""Pluggable image codecs with exact bit accounting.

Three kinds are available behind one compress/decompress interface:

* ``reference`` -- a self-contained 8x8 block-DCT codec: orthonormal
  DCT-II, uniform quantization with step ``2**((qp - 4) / 6)``, zigzag
  scan, (run, level) tokens with Exp-Golomb codes.  Deterministic and
  idempotent: re-compressing a decompressed image reproduces it exactly.
* ``identity`` -- stores the clipped 8-bit pixels verbatim (8 bpp).
* ``external`` -- shells out to configured encode/decode command templates
  with ``{input}``, ``{output}`` and ``{qp}`` placeholders.

Codec input is always ``clip(round(x), 0, peak)`` at 8-bit depth; the
clipping is part of the compress contract so optimization intermediates
may lie outside the display range.
"""

from __future__ import annotations

import os
import shlex
import struct
import subprocess
import tempfile
import uuid
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels as kernels
from .errors import DataError, ExternalCodecError
from .imageio import ensure_image, read_image, to_uint8, write_png

CODEC_KINDS = ("reference", "identity", "external")

SCRATCH_ENV_VAR = "JOINTREC_SCRATCH"

_REF_MAGIC = b"JRC1"
_REF_HEADER = struct.Struct("<HHBB")  # width, height, qp, peak
_BLOCK = 8


@dataclass(frozen=True)
class CodecParams:
    """Codec selection plus its quantization parameter.

    ``encode_cmd`` / ``decode_cmd`` are shell command templates used when
    ``codec_kind == "external"``; ``scratch_dir`` holds the temporary
    interchange files (the JOINTREC_SCRATCH environment variable overrides
    it).
    """

    qp: int = 31
    codec_kind: str = "reference"
    encode_cmd: str | None = None
    decode_cmd: str | None = None
    scratch_dir: str | None = None
    peak: int = 255

    def __post_init__(self):
        if not 0 <= self.qp <= 51:
            raise ValueError(f"qp must be in [0, 51], got {self.qp}")
        if self.codec_kind not in CODEC_KINDS:
            raise ValueError(f"unknown codec kind {self.codec_kind!r}")
        if self.codec_kind == "external" and not (self.encode_cmd and self.decode_cmd):
            raise ValueError("external codec requires encode_cmd and decode_cmd")
        if not 1 <= self.peak <= 255:
            raise ValueError("peak must be in [1, 255]")

    def with_qp(self, qp: int) -> "CodecParams":
        return replace(self, qp=qp)


@dataclass(frozen=True)
class Bitstream:
    """Opaque compressed bytes plus the exact coded size in bits.

    ``width``/``height`` are carried for codecs whose byte payload does not
    embed the dimensions (the identity codec); the reference format is
    self-contained.
    """

    data: bytes
    bit_count: int
    width: int | None = None
    height: int | None = None
    peak: int | None = None

    def __post_init__(self):
        if self.bit_count <= 0:
            raise ValueError("bit_count must be positive")
        if self.bit_count > 8 * len(self.data):
            raise ValueError("bit_count exceeds the stored bytes")


def quant_step(qp: int) -> float:
    """Quantization step 2**((qp - 4) / 6); doubles every 6 QP."""
    if not 0 <= qp <= 51:
        raise ValueError(f"qp must be in [0, 51], got {qp}")
    return float(2.0 ** ((qp - 4) / 6.0))


def _dct_matrix() -> np.ndarray:
    k = np.arange(_BLOCK)[:, None]
    n = np.arange(_BLOCK)[None, :]
    mat = np.cos(np.pi * (2 * n + 1) * k / (2 * _BLOCK))
    mat *= np.sqrt(2.0 / _BLOCK)
    mat[0, :] = np.sqrt(1.0 / _BLOCK)
    return mat


_DCT8 = _dct_matrix()


def _zigzag_order() -> np.ndarray:
    pairs = [(i, j) for i in range(_BLOCK) for j in range(_BLOCK)]
    pairs.sort(key=lambda t: (t[0] + t[1], t[0] if (t[0] + t[1]) % 2 else -t[0]))
    return np.array([i * _BLOCK + j for i, j in pairs], dtype=np.int64)


_ZIGZAG = _zigzag_order()
_UNZIGZAG = np.argsort(_ZIGZAG)


def _to_blocks(img: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-pad to multiples of 8 and reshape to (nblocks, 8, 8)."""
    h, w = img.shape
    ph = (-h) % _BLOCK
    pw = (-w) % _BLOCK
    if ph or pw:
        img = np.pad(img, ((0, ph), (0, pw)), mode="edge")
    hh, ww = img.shape
    blocks = img.reshape(hh // _BLOCK, _BLOCK, ww // _BLOCK, _BLOCK)
    blocks = blocks.transpose(0, 2, 1, 3).reshape(-1, _BLOCK, _BLOCK)
    return np.ascontiguousarray(blocks), (hh, ww)


def _from_blocks(blocks: np.ndarray, padded: tuple[int, int], true: tuple[int, int]) -> np.ndarray:
    hh, ww = padded
    img = blocks.reshape(hh // _BLOCK, ww // _BLOCK, _BLOCK, _BLOCK)
    img = img.transpose(0, 2, 1, 3).reshape(hh, ww)
    return img[: true[0], : true[1]]


def _quantize(coeffs: np.ndarray, delta: float) -> np.ndarray:
    """Uniform quantizer with half-step ties broken toward zero.

    The dequantized value ``level * delta`` is never farther than
    ``delta / 2`` from the input coefficient.
    """
    levels = np.ceil(np.abs(coeffs) / delta - 0.5)
    return (np.sign(coeffs) * levels).astype(np.int64)


def _block_dct(blocks: np.ndarray) -> np.ndarray:
    return np.matmul(_DCT8, np.matmul(blocks, _DCT8.T))


def _block_idct(coeffs: np.ndarray) -> np.ndarray:
    return np.matmul(_DCT8.T, np.matmul(coeffs, _DCT8))


def _reconstruct_pixels(levels: np.ndarray, delta: float, shift: float, peak: int) -> np.ndarray:
    rec = _block_idct(levels.astype(np.float64) * delta) + shift
    return np.clip(np.rint(rec), 0.0, float(peak))


def _stable_levels(pixels: np.ndarray, delta: float, shift: float, peak: int) -> np.ndarray:
    """Quantizer levels that survive their own decode/re-encode round trip.

    Iterates quantize -> reconstruct -> re-quantize per block until the
    levels are a fixed point; if a block settles into a short cycle instead
    the lexicographically smallest member is chosen, which every image in
    the cycle maps back to.  This is what makes decompress(compress(x))
    idempotent bit-for-bit.
    """
    cur = _quantize(_block_dct(pixels - shift), delta)
    nblocks = cur.shape[0]
    resolved = np.zeros(nblocks, dtype=bool)
    history = [cur]
    for _ in range(25):
        todo = ~resolved
        if not todo.any():
            break
        nxt = cur.copy()
        rec = _reconstruct_pixels(cur[todo], delta, shift, peak)
        nxt[todo] = _quantize(_block_dct(rec - shift), delta)
        same = np.all((nxt == cur).reshape(nblocks, -1), axis=1)
        resolved |= todo & same
        # cycle detection for the rare blocks that keep flipping
        still = np.flatnonzero(~resolved & todo)
        if still.size:
            for b in still:
                for past_idx, past in enumerate(history):
                    if np.array_equal(past[b], nxt[b]):
                        members = [h[b] for h in history[past_idx:]] + [nxt[b]]
                        keys = [m.tobytes() for m in members]
                        nxt[b] = members[int(np.argmin(keys))]
                        resolved[b] = True
                        break
        history.append(nxt)
        cur = nxt
    return cur


def _compress_reference(x: np.ndarray, params: CodecParams) -> Bitstream:
    img = to_uint8(x, params.peak).astype(np.float64)
    true_shape = img.shape
    if true_shape[0] > 0xFFFF or true_shape[1] > 0xFFFF:
        raise ValueError("reference codec supports dimensions up to 65535")
    blocks, _ = _to_blocks(img)
    delta = quant_step(params.qp)
    shift = params.peak / 2.0
    levels = _stable_levels(blocks, delta, shift, params.peak)
    zz = levels.reshape(-1, 64)[:, _ZIGZAG]
    nblocks = zz.shape[0]
    scratch = np.empty(nblocks * 64 * kernels.BITS_PER_COEFF_BOUND, dtype=np.uint8)
    nbits = int(kernels.encode_rle_bits(np.ascontiguousarray(zz), scratch))
    payload = np.packbits(scratch[:nbits]).tobytes()
    header = _REF_MAGIC + _REF_HEADER.pack(
        true_shape[1], true_shape[0], params.qp, params.peak
    )
    return Bitstream(
        data=header + payload,
        bit_count=8 * len(header) + nbits,
    )


def _decompress_reference(b: Bitstream) -> np.ndarray:
    head_len = len(_REF_MAGIC) + _REF_HEADER.size
    if len(b.data) < head_len or b.data[: len(_REF_MAGIC)] != _REF_MAGIC:
        raise DataError("not a reference-codec bitstream")
    width, height, qp, peak = _REF_HEADER.unpack_from(b.data, len(_REF_MAGIC))
    ph = height + ((-height) % _BLOCK)
    pw = width + ((-width) % _BLOCK)
    nblocks = (ph // _BLOCK) * (pw // _BLOCK)
    payload = np.frombuffer(b.data, dtype=np.uint8, offset=head_len)
    bits = np.unpackbits(payload)
    nbits = b.bit_count - 8 * head_len
    if nbits < 0 or nbits > bits.size:
        raise DataError("bit_count inconsistent with payload")
    try:
        zz = kernels.decode_rle_bits(bits, nbits, nblocks)
    except ValueError as exc:
        raise DataError(f"malformed bitstream: {exc}") from exc
    levels = zz[:, _UNZIGZAG].reshape(-1, _BLOCK, _BLOCK)
    pixels = _reconstruct_pixels(levels, quant_step(qp), peak / 2.0, peak)
    return _from_blocks(pixels, (ph, pw), (height, width))


def _compress_identity(x: np.ndarray, params: CodecParams) -> Bitstream:
    img = to_uint8(x, params.peak)
    h, w = img.shape
    return Bitstream(
        data=img.tobytes(),
        bit_count=8 * h * w,
        width=w,
        height=h,
        peak=params.peak,
    )


def _decompress_identity(b: Bitstream) -> np.ndarray:
    if b.width is None or b.height is None:
        raise DataError("identity bitstream is missing its dimensions")
    expected = b.width * b.height
    if len(b.data) != expected:
        raise DataError(f"identity payload has {len(b.data)} bytes, expected {expected}")
    arr = np.frombuffer(b.data, dtype=np.uint8).reshape(b.height, b.width)
    return arr.astype(np.float64)


def _scratch_dir(params: CodecParams) -> Path:
    env = os.environ.get(SCRATCH_ENV_VAR)
    if env:
        return Path(env)
    if params.scratch_dir:
        return Path(params.scratch_dir)
    return Path(tempfile.gettempdir())


def _run_external(template: str, in_path: Path, out_path: Path, qp: int) -> None:
    command = template.format(input=str(in_path), output=str(out_path), qp=qp)
    argv = shlex.split(command)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise ExternalCodecError(
            f"external codec command not found: {argv[0]!r}",
            command=command,
        ) from exc
    if proc.returncode != 0:
        raise ExternalCodecError(
            f"external codec failed (exit {proc.returncode}): {command}",
            command=command,
            stderr=proc.stderr,
        )
    if not out_path.exists():
        raise ExternalCodecError(
            f"external codec produced no output file: {command}",
            command=command,
            stderr=proc.stderr,
        )


def _compress_external(x: np.ndarray, params: CodecParams) -> Bitstream:
    scratch = _scratch_dir(params)
    scratch.mkdir(parents=True, exist_ok=True)
    tag = uuid.uuid4().hex
    in_path = scratch / f"jointrec-{tag}-in.png"
    out_path = scratch / f"jointrec-{tag}-enc.bin"
    try:
        write_png(in_path, x, params.peak)
        _run_external(params.encode_cmd, in_path, out_path, params.qp)
        data = out_path.read_bytes()
    finally:
        for p in (in_path, out_path):
            p.unlink(missing_ok=True)
    if not data:
        raise ExternalCodecError("external codec produced an empty file",
                                 command=params.encode_cmd or "")
    return Bitstream(data=data, bit_count=8 * len(data))


def _decompress_external(b: Bitstream, params: CodecParams) -> np.ndarray:
    scratch = _scratch_dir(params)
    scratch.mkdir(parents=True, exist_ok=True)
    tag = uuid.uuid4().hex
    in_path = scratch / f"jointrec-{tag}-enc.bin"
    out_path = scratch / f"jointrec-{tag}-dec.png"
    try:
        in_path.write_bytes(b.data)
        _run_external(params.decode_cmd, in_path, out_path, params.qp)
        return read_image(out_path)
    finally:
        for p in (in_path, out_path):
            p.unlink(missing_ok=True)


def compress(x: np.ndarray, params: CodecParams) -> Bitstream:
    """Encode an image; values outside [0, peak] are clipped first."""
    x = ensure_image(x)
    if params.codec_kind == "reference":
        return _compress_reference(x, params)
    if params.codec_kind == "identity":
        return _compress_identity(x, params)
    return _compress_external(x, params)


def decompress(b: Bitstream, params: CodecParams) -> np.ndarray:
    """Decode a bitstream produced by :func:`compress` with matching params."""
    if params.codec_kind == "reference":
        return _decompress_reference(b)
    if params.codec_kind == "identity":
        return _decompress_identity(b)
    return _decompress_external(b, params)


def write_bitstream(path: str | Path, b: Bitstream) -> None:
    """Persist compressed bytes; identity payloads get a PGM wrapper."""
    path = Path(path)
    if b.width is not None and b.height is not None:
        peak = b.peak if b.peak is not None else 255
        with open(path, "wb") as fh:
            fh.write(f"P5\n{b.width} {b.height}\n{peak}\n".encode("ascii"))
            fh.write(b.data)
    else:
        path.write_bytes(b.data)
