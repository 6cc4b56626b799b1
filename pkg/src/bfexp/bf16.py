"""Bit-level BF16 (bfloat16) arithmetic with flush-to-zero semantics.

A BF16 pattern is a 16-bit word: sign(1) | exponent(8, bias 127) | mantissa(7),
the upper half of an IEEE-754 float32. Functions take and return raw patterns,
as python ints or numpy uint16 arrays; one code path serves both. Arithmetic
widens exactly to float64, rounds once to nearest-even, saturates overflow to
+/-inf, flushes subnormals to signed zero on both input and output, and
collapses every NaN to one canonical quiet pattern.
"""

from __future__ import annotations

import math

import numpy as np

SIGN_MASK = 0x8000
EXP_MASK = 0x7F80
MANT_MASK = 0x007F

POS_ZERO = 0x0000
NEG_ZERO = 0x8000
ONE = 0x3F80
TWO = 0x4000
POS_INF = 0x7F80
NEG_INF = 0xFF80
NAN = 0x7FC0          # canonical quiet NaN: s=0, e=255, m=1000000
MIN_NORMAL = 0x0080   # 2**-126
MAX_FINITE = 0x7F7F   # 2**127 * (2 - 2**-7)

EXP_BIAS = 127
MANT_BITS = 7


def _scalar_in(*xs) -> bool:
    return all(not isinstance(v, np.ndarray) and np.ndim(v) == 0 for v in xs)


def _ret(patterns: np.ndarray, scalar: bool):
    return int(patterns[()]) if scalar else patterns


def all_patterns() -> np.ndarray:
    """Every BF16 bit pattern, 0x0000..0xFFFF."""
    return np.arange(1 << 16, dtype=np.uint16)


def ftz(x):
    """Flush subnormal patterns (e=0, m!=0) and +-0 to signed zero."""
    scalar = _scalar_in(x)
    p = np.asarray(x, dtype=np.uint16)
    out = np.where((p & EXP_MASK) == 0, p & SIGN_MASK, p)
    return _ret(out.astype(np.uint16), scalar)


def is_nan(x):
    """True where the pattern is any NaN (e=255, m!=0)."""
    p = np.asarray(x, dtype=np.uint16)
    out = ((p & EXP_MASK) == EXP_MASK) & ((p & MANT_MASK) != 0)
    return bool(out[()]) if _scalar_in(x) else out


def to_float(x):
    """Exact real value of pattern(s) as float64 (subnormals keep their value)."""
    scalar = _scalar_in(x)
    p = np.asarray(x, dtype=np.uint16)
    with np.errstate(invalid="ignore"):
        f = (p.astype(np.uint32) << np.uint32(16)).view(np.float32).astype(np.float64)
    return float(f[()]) if scalar else f


def from_float(x):
    """Nearest BF16 pattern under round-to-nearest-even.

    Overflow saturates to +-inf; results below the smallest normal magnitude
    flush to signed zero; NaN becomes the canonical quiet pattern.
    """
    scalar = _scalar_in(x)
    f = np.asarray(x, dtype=np.float64)
    bits = f.view(np.uint64)

    sign = ((bits >> np.uint64(48)) & np.uint64(SIGN_MASK)).astype(np.int64)
    exp11 = ((bits >> np.uint64(52)) & np.uint64(0x7FF)).astype(np.int64)
    mant52 = (bits & np.uint64((1 << 52) - 1)).astype(np.int64)

    e = exp11 - 1023
    sig53 = mant52 | (np.int64(1) << np.int64(52))

    # normal target: round the 53-bit significand to 8 bits (RNE at bit 45)
    keep = sig53 >> np.int64(45)
    rem = sig53 & np.int64((1 << 45) - 1)
    half = np.int64(1 << 44)
    keep = keep + ((rem > half) | ((rem == half) & ((keep & 1) == 1)))
    e_n = np.where(keep == 256, e + 1, e)
    keep = np.where(keep == 256, np.int64(128), keep)
    normal_pat = sign | ((e_n + EXP_BIAS) << MANT_BITS) | (keep - 128)

    # subnormal target (result magnitude < 2**-126): round onto the 2**-133
    # grid; a carry to exactly 2**-126 survives as min normal, rest flushes
    s_sub = np.clip(-e - 81, 0, 62)
    keep_s = sig53 >> s_sub
    rem_s = sig53 - (keep_s << s_sub)
    half_s = np.int64(1) << np.maximum(s_sub - 1, 0)
    keep_s = keep_s + ((rem_s > half_s) | ((rem_s == half_s) & ((keep_s & 1) == 1)))
    sub_pat = np.where(keep_s >= 128, sign | MIN_NORMAL, sign)

    out = np.where(e >= -126, normal_pat, sub_pat)
    out = np.where(e < -134, sign, out)
    out = np.where(e_n > 127, sign | POS_INF, out)          # saturate
    out = np.where(exp11 == 0, sign, out)                   # f64 zero/subnormal
    out = np.where((exp11 == 0x7FF) & (mant52 == 0), sign | POS_INF, out)
    out = np.where((exp11 == 0x7FF) & (mant52 != 0), np.int64(NAN), out)
    return _ret(out.astype(np.uint16), scalar)


def _widen2(a, b):
    return to_float(ftz(np.asarray(a, np.uint16))), to_float(ftz(np.asarray(b, np.uint16)))


def add(a, b):
    """a + b, exact widening then one rounding."""
    scalar = _scalar_in(a, b)
    fa, fb = _widen2(a, b)
    with np.errstate(invalid="ignore"):
        r = from_float(fa + fb)
    return _ret(np.asarray(r, np.uint16), scalar)


def sub(a, b):
    """a - b, exact widening then one rounding."""
    scalar = _scalar_in(a, b)
    fa, fb = _widen2(a, b)
    with np.errstate(invalid="ignore"):
        r = from_float(fa - fb)
    return _ret(np.asarray(r, np.uint16), scalar)


def mul(a, b):
    """a * b, exact widening then one rounding."""
    scalar = _scalar_in(a, b)
    fa, fb = _widen2(a, b)
    with np.errstate(invalid="ignore"):
        r = from_float(fa * fb)
    return _ret(np.asarray(r, np.uint16), scalar)


def div(a, b):
    """a / b, widening divide rounded once (single rounding: see tests)."""
    scalar = _scalar_in(a, b)
    fa, fb = _widen2(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = from_float(fa / fb)
    return _ret(np.asarray(r, np.uint16), scalar)


def recip(a):
    """Correctly rounded 1/a; recip(+-0) = +-inf, recip(+-inf) = +-0."""
    scalar = _scalar_in(a)
    fa = to_float(ftz(np.asarray(a, np.uint16)))
    with np.errstate(divide="ignore"):
        r = from_float(1.0 / fa)
    return _ret(np.asarray(r, np.uint16), scalar)


def fmax(a, b):
    """NaN-ignoring maximum that returns one of the input patterns.

    A single NaN operand yields the other operand; max(+0, -0) is +0.
    """
    scalar = _scalar_in(a, b)
    pa = ftz(np.asarray(a, np.uint16))
    pb = ftz(np.asarray(b, np.uint16))
    fa, fb = to_float(pa), to_float(pb)
    na, nb = is_nan(pa), is_nan(pb)
    with np.errstate(invalid="ignore"):
        take_b = (fb > fa) | na
    out = np.where(take_b, pb, pa)
    both_zero = ((pa & 0x7FFF) == 0) & ((pb & 0x7FFF) == 0)
    out = np.where(both_zero, pa & pb, out)
    out = np.where(na & nb, np.uint16(NAN), out)
    return _ret(out.astype(np.uint16), scalar)


# ---------------------------------------------------------------------------
# 64-bit packed vectors: 4 BF16 lanes, lane 0 in the least-significant bits.

def pack(lanes) -> int:
    """Pack 4 patterns into one 64-bit word."""
    l0, l1, l2, l3 = (int(v) & 0xFFFF for v in lanes)
    return l0 | (l1 << 16) | (l2 << 32) | (l3 << 48)


def unpack(word: int) -> tuple[int, int, int, int]:
    """Split a 64-bit word into its 4 BF16 lane patterns."""
    return tuple((word >> (16 * i)) & 0xFFFF for i in range(4))  # type: ignore[return-value]


def simd_map2(op, va: int, vb: int) -> int:
    """Apply a two-operand pattern op to each lane of two packed vectors."""
    a = np.array(unpack(va), dtype=np.uint16)
    b = np.array(unpack(vb), dtype=np.uint16)
    return pack(op(a, b))


# ---------------------------------------------------------------------------
# helpers for tolerances and test metrics

def ulp_of(value: float) -> float:
    """BF16 spacing at the magnitude of a real value (min-normal step floor)."""
    av = abs(float(value))
    if av == 0.0 or not math.isfinite(av):
        return 2.0 ** (-126 - MANT_BITS)
    m, e = math.frexp(av)              # av = m * 2**e, m in [0.5, 1)
    e = max(e - 1, -126)
    return 2.0 ** (e - MANT_BITS)


def ordinal(x):
    """Monotone integer mapping of finite patterns (adjacent normals differ by 1)."""
    scalar = _scalar_in(x)
    p = np.asarray(ftz(np.asarray(x, np.uint16)), np.uint16).astype(np.int64)
    mag = p & 0x7FFF
    out = np.where((p & SIGN_MASK) != 0, -mag, mag)
    return int(out[()]) if scalar else out
