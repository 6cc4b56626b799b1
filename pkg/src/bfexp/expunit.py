"""Bit-exact model of a two-stage BF16 exponential unit.

Stage 1 (exps) splits x*log2(e) into an integer part k (the new exponent) and
a 7-bit fraction f, entirely in fixed point: the 8-bit input significand is
multiplied by a quantized log2(e) constant, aligned by a right shift against
the exponent ceiling beyond which exp must saturate, negated in two's
complement for negative inputs (floor semantics keep f in [0,1)), and reduced
to a 15-bit integer/fraction pair. Stage 2 (p_stage) replaces the fraction
with a piecewise-quadratic correction P(f) approximating 2**f - 1, using
bitwise complement as a cheap 1-x. The result is 2**k * (1 + P(f)).

`exp_bf16` mirrors the hardware stage by stage. `exp_ref_fixed` recomputes
the same contract by an independent route (whole-value integer arithmetic and
exact rationals) and exists so the two can disagree when either is wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import bf16

_ROUND_MODES = ("truncate", "half-up")


@dataclass(frozen=True)
class ExpUnitParams:
    """Datapath constants; defaults are the calibrated configuration."""

    alpha: float = 0.21875
    beta: float = 0.4375
    gamma1: float = 3.296875
    gamma2: float = 2.171875
    const_frac_bits: int = 6         # all four constants are exact at 6 bits
    log2e_frac_bits: int = 15        # W_c of the log2(e) multiplier constant
    select_bits: int = 15            # retained integer+fraction bits (8 + 7)
    overflow_exp_threshold: int = 133  # biased exponent beyond which exp saturates
    round_mode: str = "truncate"     # reduction of the shifted product to 15 bits
    p_round_mode: str = "half-up"    # quantization of P(f) back to 7 bits
    pipeline_latency_cycles: int = 2
    correction_enabled: bool = True  # False: P(f) = f (plain Schraudolph)

    def __post_init__(self):
        scale = 1 << self.const_frac_bits
        for name in ("alpha", "beta", "gamma1", "gamma2"):
            v = getattr(self, name) * scale
            if v != int(v):
                raise ValueError(f"{name} not representable in {self.const_frac_bits} fraction bits")
        if self.round_mode not in _ROUND_MODES or self.p_round_mode not in _ROUND_MODES:
            raise ValueError(f"round modes must be one of {_ROUND_MODES}")
        if self.select_bits != 15:
            raise ValueError("selection width is fixed at 8 integer + 7 fraction bits")

    def log2e_const(self) -> int:
        """log2(e) scaled to W_c fraction bits, rounded to nearest."""
        return round(math.log2(math.e) * (1 << self.log2e_frac_bits))

    def fix(self, name: str) -> int:
        """A polynomial constant in its fixed-point encoding."""
        return int(getattr(self, name) * (1 << self.const_frac_bits))


DEFAULT = ExpUnitParams()


@dataclass(frozen=True)
class ExpsStageOut:
    """Stage-1 result: exponent/fraction split, or a special-case verdict."""

    sign: int
    biased_exponent: int
    frac7: int
    special: str | None = None       # None | pos_overflow | neg_underflow | nan


def exps_stage(x: int, params: ExpUnitParams = DEFAULT) -> ExpsStageOut:
    """Schraudolph stage: split x*log2(e) into exponent and 7-bit fraction."""
    x = int(x) & 0xFFFF
    s = x >> 15
    e = (x >> 7) & 0xFF
    m = x & 0x7F
    th = params.overflow_exp_threshold
    if e == 0xFF and m != 0:
        return ExpsStageOut(0, 0, 0, "nan")
    if e == 0:
        return ExpsStageOut(0, bf16.EXP_BIAS, 0)     # exp(+-0/subnormal) = 1.0
    if e > th:                                        # covers +-inf
        return ExpsStageOut(0, 0, 0, "pos_overflow" if s == 0 else "neg_underflow")

    sig8 = 0x80 | m
    prod = sig8 * params.log2e_const()   # 24 bits: value has 7+W_c fraction bits
    shifted = prod >> (th - e)           # realigned: W_c+1 fraction bits remain
    val = -shifted if s else shifted     # two's-complement negation, full width

    drop = params.log2e_frac_bits - 6    # keep 8 integer + 7 fraction bits
    if params.round_mode == "half-up":
        sel = (val + (1 << (drop - 1))) >> drop
    else:
        sel = val >> drop                # arithmetic shift: floor for negatives

    k = sel >> 7
    frac7 = sel & 0x7F
    biased = bf16.EXP_BIAS + k
    if biased >= 0xFF:
        return ExpsStageOut(0, 0, 0, "pos_overflow")
    if biased <= 0:
        return ExpsStageOut(0, 0, 0, "neg_underflow")
    return ExpsStageOut(0, biased, frac7)


def p_stage(frac7: int, params: ExpUnitParams = DEFAULT) -> int:
    """Mantissa correction P(f) ~ 2**f - 1 on the 7-bit fraction grid.

    Branch f < 0.5: alpha*f*(f+gamma1). Branch f >= 0.5 uses bitwise
    complement for 1-x: not(beta*not(f)*(f+gamma2)). Intermediates are held
    at full width (20 fraction bits); only the result is quantized.
    """
    frac7 = int(frac7) & 0x7F
    if not params.correction_enabled:
        return frac7
    if frac7 < 0x40:
        t20 = params.fix("alpha") * frac7 * ((params.fix("gamma1") << 1) + frac7)
        return _quant_p(t20, params)
    comp = 0x7F ^ frac7                  # 7-bit not: 1 - 2**-7 - f
    t20 = params.fix("beta") * comp * ((params.fix("gamma2") << 1) + frac7)
    return 0x7F - _quant_p(t20, params)  # outer not, applied on the 7-bit grid


def _quant_p(t20: int, params: ExpUnitParams) -> int:
    if params.p_round_mode == "half-up":
        return (t20 + (1 << 12)) >> 13
    return t20 >> 13


def exp_bf16(x: int, params: ExpUnitParams = DEFAULT) -> int:
    """exp(x) through the two-stage datapath; pattern in, pattern out."""
    st = exps_stage(x, params)
    if st.special == "nan":
        return bf16.NAN
    if st.special == "pos_overflow":
        return bf16.POS_INF
    if st.special == "neg_underflow":
        return bf16.POS_ZERO
    return (st.biased_exponent << 7) | p_stage(st.frac7, params)


def vfexp(packed: int, params: ExpUnitParams = DEFAULT) -> int:
    """4-lane packed exp: exp_bf16 applied to each 16-bit lane."""
    return bf16.pack(exp_bf16(lane, params) for lane in bf16.unpack(packed))


@lru_cache(maxsize=4)
def exp_table(params: ExpUnitParams = DEFAULT) -> np.ndarray:
    """exp_bf16 tabulated over all 65,536 patterns (for bulk kernels)."""
    out = np.empty(1 << 16, dtype=np.uint16)
    for x in range(1 << 16):
        out[x] = exp_bf16(x, params)
    out.setflags(write=False)
    return out


def exp_map(x, params: ExpUnitParams = DEFAULT):
    """Vectorized exp_bf16 over an array of patterns."""
    return exp_table(params)[np.asarray(x, dtype=np.uint16)]


# ---------------------------------------------------------------------------
# references


def exp_ref_real(x: float, params: ExpUnitParams = DEFAULT) -> float:
    """Idealized real-arithmetic model of the pipeline (no fixed point).

    not(t) is modeled as 1 - 2**-7 - t to mirror the bitwise complement.
    """
    if math.isnan(x):
        return math.nan
    xp = x * math.log2(math.e)
    k = math.floor(xp)
    f = xp - k
    if not params.correction_enabled:
        p = f
    elif f < 0.5:
        p = params.alpha * f * (f + params.gamma1)
    else:
        nf = 1.0 - 2.0 ** -7 - f
        p = 1.0 - 2.0 ** -7 - params.beta * nf * (f + params.gamma2)
    if k > 1100:
        return math.inf
    if k < -1100:
        return 0.0
    return math.ldexp(1.0 + p, k)


def exp_ref_fixed(x: int, params: ExpUnitParams = DEFAULT) -> int:
    """Independent fixed-point reference for exp_bf16.

    Same contract, different route: unbounded-integer arithmetic with divmod
    for the exponent/fraction split and exact rationals for P(f), instead of
    the staged shift-and-mask pipeline.
    """
    x = int(x) & 0xFFFF
    s, e, m = x >> 15, (x >> 7) & 0xFF, x & 0x7F
    th = params.overflow_exp_threshold
    if e == 0xFF and m != 0:
        return bf16.NAN
    if e == 0:
        return bf16.ONE
    if e > th:
        return bf16.POS_INF if s == 0 else bf16.POS_ZERO

    mag = ((128 + m) * params.log2e_const()) // (1 << (th - e))
    signed = -mag if s else mag
    grid = 1 << (params.log2e_frac_bits - 6)
    if params.round_mode == "half-up":
        signed += grid // 2
    sel = signed // grid
    k, f7 = divmod(sel, 128)
    if 127 + k >= 255:
        return bf16.POS_INF
    if 127 + k <= 0:
        return bf16.POS_ZERO

    if not params.correction_enabled:
        p7 = f7
    else:
        f = Fraction(f7, 128)
        ulp7 = Fraction(1, 128)
        if f < Fraction(1, 2):
            exact = Fraction(params.alpha) * f * (f + Fraction(params.gamma1))
            p7 = _quant_frac(exact, params)
        else:
            nf = 1 - ulp7 - f
            exact = Fraction(params.beta) * nf * (f + Fraction(params.gamma2))
            p7 = 127 - _quant_frac(exact, params)
    return ((127 + k) << 7) | p7


def _quant_frac(v: Fraction, params: ExpUnitParams) -> int:
    scaled = v * 128
    if params.p_round_mode == "half-up":
        scaled += Fraction(1, 2)
    return scaled.numerator // scaled.denominator
