"""Byte-aligned floating-point codecs for matrix payloads.

Two scalar codecs plus a per-column wrapper for low-rank factors:

AFLP (adaptive floating point)
    Chooses a custom format per buffer from the accuracy ``eps`` and the
    value range: ``m_eps = ceil(-log2 eps)`` mantissa bits are required,
    ``e_dr = ceil(log2 log2 (v_max / v_min))`` exponent bits (clamped to
    [1, 11]) cover the dynamic range, and the mantissa is widened to the
    next byte boundary: total bits 1 + m' + e_dr divisible by 8, at most
    64 (beyond that values are stored as verbatim float64).  Magnitudes
    are rescaled so every stored exponent is at least 1, which reserves
    the all-zero code word for exact zeros.

    Word layout, least significant bit first within a little-endian word
    of ``1 + m' + e_dr`` bits:

        [0, e_dr)            exponent code (0 means the value is zero)
        [e_dr, e_dr + m')    mantissa fraction, implicit leading 1
        top bit              sign

    Decoded value: ``(-1)**sign * (1 + frac * 2**-m') * 2**(code + shift)``
    with the per-buffer exponent offset ``shift``.  Round to nearest (ties
    to even) keeps the per-value relative roundtrip error at or below
    ``2**-(min(m', 52) + 1) <= 4 * 2**-m_eps`` (float64 sources carry at
    most 52 fraction bits, so wider mantissas are zero padded).

FPX (fixed-point-exponent truncation)
    Byte-aligned truncations of IEEE float32 (8 exponent bits) or float64
    (11 exponent bits) chosen from an accuracy table; the stored word is
    the top ``1 + e + m`` bits of the IEEE encoding after rounding the
    mantissa to ``m`` bits (round to nearest, ties away from zero).  The
    float32 family rounds through float32 first; per-value relative error
    stays at or below ``2**-m``.  Values that round to infinity in the
    8-bit-exponent family raise an error.

VALR (value-adaptive low-rank)
    Compresses each column of an orthonormal factor with its own accuracy
    derived from the attached singular values; see ``valr_compress`` and
    ``valr_compress_basis``.

Serialized buffer layout (also used inside matrix container files), all
little-endian:

    AFLP: u8 tag 'A', u8 flags (bit0 = verbatim float64), u8 mant_bits,
          u8 exp_bits, i32 exp_offset, u64 count, payload
    FPX:  u8 tag 'F', u8 exp_bits, u8 mant_bits, u8 zero, u32 zero,
          u64 count, payload

Both headers are 16 bytes; payloads hold ``count`` words of
``(1 + mant_bits + exp_bits) / 8`` bytes each, positionally addressable.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

BUFFER_HEADER_BYTES = 16

_AFLP_TAG = 0x41
_FPX_TAG = 0x46

# ----------------------------------------------------------------------------
# bit packing helpers


def _pack_words(words: np.ndarray, bytes_per_value: int) -> bytes:
    """Store uint64 words as little-endian fixed-width byte groups."""
    rows = words.astype("<u8").view(np.uint8).reshape(-1, 8)[:, :bytes_per_value]
    return np.ascontiguousarray(rows).tobytes()


def _unpack_words(payload: bytes, bytes_per_value: int, count: int) -> np.ndarray:
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, bytes_per_value)
    full = np.zeros((count, 8), dtype=np.uint8)
    full[:, :bytes_per_value] = raw
    return full.reshape(-1).view("<u8").copy()


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")


# ----------------------------------------------------------------------------
# AFLP


@dataclass(frozen=True)
class AflpParams:
    """Format parameters: mantissa/exponent widths and the magnitude mapping.

    ``scale`` multiplies values so the smallest magnitude lands at stored
    exponent 1; ``shift`` is the exponent offset added back when decoding
    (scale == 2.0 ** -shift).
    """

    mant_bits: int
    exp_bits: int
    scale: float
    shift: float
    verbatim: bool = False

    @property
    def bits_per_value(self) -> int:
        return 1 + self.mant_bits + self.exp_bits

    @property
    def bytes_per_value(self) -> int:
        return self.bits_per_value // 8


@dataclass(frozen=True)
class AflpBuffer:
    mant_bits: int
    exp_bits: int
    exp_offset: int
    count: int
    payload: bytes
    verbatim: bool = False

    @property
    def bytes_per_value(self) -> int:
        return 8 if self.verbatim else (1 + self.mant_bits + self.exp_bits) // 8

    @property
    def stored_bytes(self) -> int:
        return BUFFER_HEADER_BYTES + len(self.payload)


def _required_mantissa(eps: float) -> int:
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValueError("eps must be positive and finite")
    return max(1, math.ceil(-math.log2(eps)))


def _align_mantissa(m_eps: int, exp_bits: int) -> int:
    """Smallest mantissa width >= m_eps making 1 + m' + e_dr a byte multiple."""
    total = ((1 + m_eps + exp_bits + 7) // 8) * 8
    return total - 1 - exp_bits


def aflp_params(eps: float, v_min: float, v_max: float) -> AflpParams:
    """Format selection for accuracy eps and magnitude range [v_min, v_max]."""
    m_eps = _required_mantissa(eps)
    if not (0.0 < v_min <= v_max and math.isfinite(v_max)):
        raise ValueError("need 0 < v_min <= v_max, finite")
    log_ratio = max(math.log2(v_max) - math.log2(v_min), 0.0)  # v_max/v_min may overflow
    exp_bits = 1 if log_ratio <= 1.0 else math.ceil(math.log2(log_ratio))
    exp_bits = min(max(exp_bits, 1), 11)
    e_min = math.frexp(v_min)[1] - 1  # v_min = f * 2**(e_min+1), f in [0.5, 1)
    mant = _align_mantissa(m_eps, exp_bits)
    if 1 + mant + exp_bits > 64:
        return AflpParams(52, 11, 1.0, 0.0, verbatim=True)
    shift = float(e_min - 1)
    try:
        scale = math.ldexp(1.0, int(-shift))
    except OverflowError:  # subnormal v_min; decoding only needs shift
        scale = math.inf
    return AflpParams(mant, exp_bits, scale, shift)


def _aflp_verbatim(values: np.ndarray) -> AflpBuffer:
    return AflpBuffer(52, 11, 0, values.size, values.astype("<f8").tobytes(), verbatim=True)


def aflp_compress(values: np.ndarray, eps: float) -> AflpBuffer:
    """Encode a float array; order and length are preserved exactly.

    Exact zeros map to the reserved all-zero word.  When the actual
    exponent span of the data does not fit the formula-selected exponent
    width, the width grows just enough (the format stays byte aligned);
    spans beyond 11 exponent bits fall back to verbatim float64 storage.
    """
    values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    _check_finite(values)
    m_eps = _required_mantissa(eps)
    absv = np.abs(values)
    nonzero = absv > 0.0
    if not nonzero.any():
        mant_zero = _align_mantissa(m_eps, 1)
        if 1 + mant_zero + 1 > 64:
            return _aflp_verbatim(values)
        params = AflpParams(mant_zero, 1, 1.0, 0.0)
        payload = bytes(values.size * params.bytes_per_value)
        return AflpBuffer(params.mant_bits, params.exp_bits, 0, values.size, payload)

    v_min = float(absv[nonzero].min())
    v_max = float(absv[nonzero].max())
    params = aflp_params(eps, v_min, v_max)
    if params.verbatim:
        return _aflp_verbatim(values)

    exp_offset = int(params.shift)
    mant_frac, exps = np.frexp(absv)  # |v| = mant_frac * 2**exps, mant_frac in [0.5, 1)
    frac = 2.0 * mant_frac - 1.0  # in [0, 1)

    exp_bits = params.exp_bits
    mant = params.mant_bits
    while True:
        eff = min(mant, 52)  # float64 carries no more than 52 fraction bits
        q = np.rint(np.ldexp(frac, eff)).astype(np.uint64)
        carry = q >> np.uint64(eff)
        q = np.where(carry > 0, np.uint64(0), q) << np.uint64(mant - eff)
        codes = exps.astype(np.int64) - 1 + carry.astype(np.int64) - exp_offset
        max_code = int(codes[nonzero].max())
        if max_code <= (1 << exp_bits) - 1:
            break
        # the formula-selected exponent width cannot hold the actual span
        # (plus rounding carry); widen and retry with a realigned mantissa
        exp_bits = max(exp_bits + 1, max_code.bit_length())
        if exp_bits > 11:
            return _aflp_verbatim(values)
        mant = _align_mantissa(m_eps, exp_bits)
        if 1 + mant + exp_bits > 64:
            return _aflp_verbatim(values)

    bits = 1 + mant + exp_bits
    sign = np.signbit(values).astype(np.uint64) << np.uint64(bits - 1)
    words = sign | (q << np.uint64(exp_bits)) | codes.astype(np.uint64)
    words = np.where(nonzero, words, np.uint64(0))
    return AflpBuffer(mant, exp_bits, exp_offset, values.size, _pack_words(words, bits // 8))


def _aflp_decode_words(buf: AflpBuffer, words: np.ndarray) -> np.ndarray:
    mant = buf.mant_bits
    exp_bits = buf.exp_bits
    codes = (words & np.uint64((1 << exp_bits) - 1)).astype(np.int64)
    frac = ((words >> np.uint64(exp_bits)) & np.uint64((1 << mant) - 1)).astype(np.float64)
    sign = words >> np.uint64(mant + exp_bits)
    mantissa = 1.0 + np.ldexp(frac, -mant)
    out = np.ldexp(mantissa, codes + buf.exp_offset)
    out[words == 0] = 0.0
    return np.where(sign > 0, -out, out)


def aflp_decompress(buf: AflpBuffer) -> np.ndarray:
    if buf.verbatim:
        return np.frombuffer(buf.payload, dtype="<f8").astype(np.float64)
    words = _unpack_words(buf.payload, buf.bytes_per_value, buf.count)
    return _aflp_decode_words(buf, words)


def aflp_decode_range(buf: AflpBuffer, lo: int, hi: int) -> np.ndarray:
    """Decode the positional slice [lo, hi) without touching other values."""
    if not 0 <= lo <= hi <= buf.count:
        raise IndexError("slice out of range")
    bpv = buf.bytes_per_value
    chunk = buf.payload[lo * bpv : hi * bpv]
    if buf.verbatim:
        return np.frombuffer(chunk, dtype="<f8").astype(np.float64)
    words = _unpack_words(chunk, bpv, hi - lo)
    return _aflp_decode_words(buf, words)


def aflp_get(buf: AflpBuffer, i: int) -> float:
    if not 0 <= i < buf.count:
        raise IndexError("value index out of range")
    return float(aflp_decode_range(buf, i, i + 1)[0])


# ----------------------------------------------------------------------------
# FPX

# accuracy table: mantissa demand ceil(-log2 eps) up to `bound` maps to the
# (exp_bits, mant_bits) truncation of float32 (e=8) or float64 (e=11)
_FPX_TABLE = (
    (10, 8, 7),
    (15, 8, 15),
    (23, 8, 23),
    (28, 11, 28),
    (36, 11, 36),
    (44, 11, 44),
    (52, 11, 52),
)

_FPX_FORMATS = {(e, m) for _, e, m in _FPX_TABLE}


@dataclass(frozen=True)
class FpxBuffer:
    exp_bits: int
    mant_bits: int
    count: int
    payload: bytes

    @property
    def bytes_per_value(self) -> int:
        return (1 + self.exp_bits + self.mant_bits) // 8

    @property
    def stored_bytes(self) -> int:
        return BUFFER_HEADER_BYTES + len(self.payload)


def fpx_select(eps: float) -> tuple[int, int]:
    """Table lookup: accuracy eps to (exp_bits, mant_bits)."""
    demand = _required_mantissa(eps) if eps < 1.0 else 0
    for bound, e, m in _FPX_TABLE:
        if demand <= bound:
            return (e, m)
    return (11, 52)


def fpx_format_for_target(target: float) -> tuple[int, int]:
    """Smallest table format whose guaranteed error 2**-m is below target.

    Unlike ``fpx_select`` this never under-delivers: the coarsest table row
    covers accuracy demands above its own mantissa width, which is fine for
    plain storage but not when a hard per-column error budget must hold.
    """
    if not (target > 0.0):
        raise ValueError("target must be positive")
    demand = max(0, math.ceil(-math.log2(target)))
    for _, e, m in _FPX_TABLE:
        if m >= demand:
            return (e, m)
    return (11, 52)


def fpx_compress_format(values: np.ndarray, exp_bits: int, mant_bits: int) -> FpxBuffer:
    """Encode with an explicit (exp_bits, mant_bits) pair from the table."""
    if (exp_bits, mant_bits) not in _FPX_FORMATS:
        raise ValueError(f"unsupported fpx format ({exp_bits}, {mant_bits})")
    values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    _check_finite(values)
    if exp_bits == 8:
        with np.errstate(over="ignore"):
            f32 = values.astype(np.float32)
        if not np.all(np.isfinite(f32)):
            raise OverflowError("value magnitude exceeds the float32 family range")
        u = f32.view(np.uint32).astype(np.uint64)
        drop = 23 - mant_bits
        exp_mask = np.uint64(0xFF)
        exp_shift = np.uint64(23)
    else:
        u = values.view(np.uint64).copy()
        drop = 52 - mant_bits
        exp_mask = np.uint64(0x7FF)
        exp_shift = np.uint64(52)
    if drop:
        u = (u + np.uint64(1 << (drop - 1))) & ~np.uint64((1 << drop) - 1)
        if np.any(((u >> exp_shift) & exp_mask) == exp_mask):
            raise OverflowError("mantissa rounding overflowed to infinity")
    words = u >> np.uint64(drop)
    bits = 1 + exp_bits + mant_bits
    return FpxBuffer(exp_bits, mant_bits, values.size, _pack_words(words, bits // 8))


def fpx_compress(values: np.ndarray, eps: float) -> FpxBuffer:
    e, m = fpx_select(eps)
    return fpx_compress_format(values, e, m)


def _fpx_decode_words(buf: FpxBuffer, words: np.ndarray) -> np.ndarray:
    if buf.exp_bits == 8:
        drop = 23 - buf.mant_bits
        u = (words << np.uint64(drop)).astype(np.uint32)
        return u.view(np.float32).astype(np.float64)
    drop = 52 - buf.mant_bits
    u = words << np.uint64(drop)
    return u.view(np.float64).astype(np.float64)


def fpx_decompress(buf: FpxBuffer) -> np.ndarray:
    words = _unpack_words(buf.payload, buf.bytes_per_value, buf.count)
    return _fpx_decode_words(buf, words)


def fpx_decode_range(buf: FpxBuffer, lo: int, hi: int) -> np.ndarray:
    if not 0 <= lo <= hi <= buf.count:
        raise IndexError("slice out of range")
    bpv = buf.bytes_per_value
    words = _unpack_words(buf.payload[lo * bpv : hi * bpv], bpv, hi - lo)
    return _fpx_decode_words(buf, words)


def fpx_get(buf: FpxBuffer, i: int) -> float:
    if not 0 <= i < buf.count:
        raise IndexError("value index out of range")
    return float(fpx_decode_range(buf, i, i + 1)[0])


# ----------------------------------------------------------------------------
# generic buffer serialization (shared with the matrix container format)


def serialize_buffer(buf) -> bytes:
    if isinstance(buf, AflpBuffer):
        head = struct.pack(
            "<BBBBiQ", _AFLP_TAG, 1 if buf.verbatim else 0, buf.mant_bits, buf.exp_bits,
            buf.exp_offset, buf.count,
        )
    elif isinstance(buf, FpxBuffer):
        head = struct.pack("<BBBBIQ", _FPX_TAG, buf.exp_bits, buf.mant_bits, 0, 0, buf.count)
    else:
        raise TypeError(f"not a codec buffer: {type(buf)!r}")
    assert len(head) == BUFFER_HEADER_BYTES
    return head + buf.payload


def deserialize_buffer(raw: bytes, offset: int = 0):
    """Read one buffer from ``raw`` at ``offset``; returns (buffer, end_offset)."""
    tag = raw[offset]
    if tag == _AFLP_TAG:
        _, flags, mant, exp_bits, exp_offset, count = struct.unpack_from("<BBBBiQ", raw, offset)
        buf = AflpBuffer(mant, exp_bits, exp_offset, count, b"", verbatim=bool(flags & 1))
        size = count * buf.bytes_per_value
        start = offset + BUFFER_HEADER_BYTES
        return (
            AflpBuffer(mant, exp_bits, exp_offset, count, raw[start : start + size],
                       verbatim=bool(flags & 1)),
            start + size,
        )
    if tag == _FPX_TAG:
        _, exp_bits, mant, _, _, count = struct.unpack_from("<BBBBIQ", raw, offset)
        buf = FpxBuffer(exp_bits, mant, count, b"")
        size = count * buf.bytes_per_value
        start = offset + BUFFER_HEADER_BYTES
        return FpxBuffer(exp_bits, mant, count, raw[start : start + size]), start + size
    raise ValueError(f"unknown buffer tag {tag:#x}")


def buffer_decompress(buf) -> np.ndarray:
    if isinstance(buf, AflpBuffer):
        return aflp_decompress(buf)
    return fpx_decompress(buf)


def buffer_decode_range(buf, lo: int, hi: int) -> np.ndarray:
    if isinstance(buf, AflpBuffer):
        return aflp_decode_range(buf, lo, hi)
    return fpx_decode_range(buf, lo, hi)


def compress_values(values: np.ndarray, scheme: str, eps: float):
    if scheme == "aflp":
        return aflp_compress(values, eps)
    if scheme == "fpx":
        return fpx_compress(values, eps)
    raise ValueError(f"unknown compression scheme {scheme!r}")


def compress_values_to_target(values: np.ndarray, scheme: str, target: float):
    """Encode with a hard per-value relative error budget ``target``.

    AFLP carries a worst-case constant of 4 relative to its nominal
    accuracy, so the nominal accuracy is quartered; FPX picks the smallest
    format whose guarantee 2**-m meets the budget.
    """
    if scheme == "aflp":
        return aflp_compress(values, max(target, 2.0**-60) / 4.0)
    if scheme == "fpx":
        e, m = fpx_format_for_target(target)
        return fpx_compress_format(values, e, m)
    raise ValueError(f"unknown compression scheme {scheme!r}")


# ----------------------------------------------------------------------------
# matrix wrappers: direct whole-array compression and per-column VALR


@dataclass(frozen=True)
class CompressedArray:
    """Column-major compressed 2-D array."""

    shape: tuple
    buf: object

    def decode(self) -> np.ndarray:
        return buffer_decompress(self.buf).reshape(self.shape, order="F")

    def decode_column(self, j: int) -> np.ndarray:
        nrows = self.shape[0]
        return buffer_decode_range(self.buf, j * nrows, (j + 1) * nrows)

    def decode_column_strip(self, j: int, lo: int, hi: int) -> np.ndarray:
        nrows = self.shape[0]
        return buffer_decode_range(self.buf, j * nrows + lo, j * nrows + hi)

    @property
    def stored_bytes(self) -> int:
        return self.buf.stored_bytes


def compress_array(a: np.ndarray, scheme: str, eps: float) -> CompressedArray:
    a = np.asarray(a, dtype=np.float64)
    return CompressedArray(a.shape, compress_values(a.reshape(-1, order="F"), scheme, eps))


@dataclass(frozen=True)
class ValrFactor:
    """Orthonormal factor stored one column per buffer, accuracies varying."""

    nrows: int
    buffers: tuple

    @property
    def rank(self) -> int:
        return len(self.buffers)

    @property
    def shape(self) -> tuple:
        return (self.nrows, self.rank)

    def decode(self) -> np.ndarray:
        out = np.empty((self.nrows, self.rank), order="F")
        for j, buf in enumerate(self.buffers):
            out[:, j] = buffer_decompress(buf)
        return out

    def decode_column(self, j: int) -> np.ndarray:
        return buffer_decompress(self.buffers[j])

    @property
    def stored_bytes(self) -> int:
        return sum(buf.stored_bytes for buf in self.buffers)


def _valr_targets(sigma: np.ndarray, delta: float, divisor: int) -> np.ndarray:
    return (delta / sigma) / float(divisor)


@dataclass(frozen=True)
class ValrBlock:
    """Compressed low-rank pair: per-column buffers plus exact singular values.

    Sigma stays at full precision; ``targets`` records the per-column
    accuracy every buffer was required to meet.
    """

    w: ValrFactor
    x: ValrFactor
    sigma: np.ndarray
    targets: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size

    @property
    def shape(self) -> tuple:
        return (self.w.nrows, self.x.nrows)

    @property
    def stored_bytes(self) -> int:
        return self.w.stored_bytes + self.x.stored_bytes


def valr_compress(w, x, sigma, delta: float, scheme: str) -> ValrBlock:
    """Column-adaptive compression of a factor pair w diag(sigma) x.T.

    Column i of both factors is stored with accuracy
    ``(delta / sigma_i) / (2k + 1)``; the divisor compensates the error
    amplification of the reconstructed block so the total block error
    stays below ``delta * (1 + 2k + delta * sum(1/sigma_i))``.  Columns
    with sigma_i == 0 are dropped entirely.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    sigma = np.asarray(sigma, dtype=np.float64)
    keep = sigma > 0.0
    w = np.asarray(w, dtype=np.float64)[:, keep]
    x = np.asarray(x, dtype=np.float64)[:, keep]
    sigma = sigma[keep]
    k = sigma.size
    targets = _valr_targets(sigma, delta, 2 * k + 1) if k else sigma
    wbufs = tuple(compress_values_to_target(w[:, i], scheme, targets[i]) for i in range(k))
    xbufs = tuple(compress_values_to_target(x[:, i], scheme, targets[i]) for i in range(k))
    return ValrBlock(
        ValrFactor(w.shape[0], wbufs), ValrFactor(x.shape[0], xbufs), sigma.copy(), targets
    )


def valr_compress_basis(matrix, sigma, delta: float, scheme: str) -> ValrFactor:
    """Column-adaptive compression of a single shared basis.

    Column accuracies are ``(delta / sigma_i) / k``, compensating the rank
    factor in the basis error bound ||(W - W~) diag(sigma)||_F <= k * delta.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    sigma = np.asarray(sigma, dtype=np.float64)
    matrix = np.asarray(matrix, dtype=np.float64)
    keep = sigma > 0.0
    matrix = matrix[:, keep]
    sigma = sigma[keep]
    k = sigma.size
    targets = _valr_targets(sigma, delta, max(k, 1)) if k else sigma
    bufs = tuple(compress_values_to_target(matrix[:, i], scheme, targets[i]) for i in range(k))
    return ValrFactor(matrix.shape[0], bufs)


def valr_decompress(block: ValrBlock) -> tuple:
    """Decode a compressed pair, folding sigma into the row side.

    Returns (u, v) with u = w~ diag(sigma) so the block is u @ v.T.
    """
    return block.w.decode() * block.sigma, block.x.decode()
