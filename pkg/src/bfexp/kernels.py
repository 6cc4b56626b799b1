"""Softmax and attention kernels over BF16 patterns.

softmax_optimized mirrors the accelerated kernel's three phases:

  MAX   packed 4-lane running-max accumulators, horizontal reduce, scalar tail
  EXP   per group: subtract max, exponentiate, add into 4 lane accumulators
  NORM  one reciprocal of the sum, then a multiply per group

partial_softmax_update is the same MAX+EXP step in block-incremental form
(running max m, running exponential sum l), which is what the tiled
attention kernel consumes. Feeding a whole row as a single block and
normalizing reproduces softmax_optimized bit for bit, so both paths share
the phase helpers below.

All kernels accept a single row (1-D) or a batch of equal-length rows
(2-D) of uint16 patterns and vectorize across the batch; the loops below
walk groups within a row, not rows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import bf16
from .expunit import DEFAULT, ExpUnitParams, exp_table

LANES = 4


class AccumPolicy(enum.Enum):
    """Precision of the running-sum (and attention output) accumulators."""

    FAITHFUL = "faithful"   # 4 BF16 lane accumulators, reduced pairwise
    WIDE = "wide"           # >=32-bit accumulation, rounded once at the end


@dataclass(frozen=True)
class RowStats:
    """Running (max, exp-sum) per row. l is uint16 patterns in faithful
    mode, float64 in wide mode."""

    m: np.ndarray
    l: np.ndarray

    @staticmethod
    def fresh(n_rows: int, acc: AccumPolicy) -> "RowStats":
        m = np.full(n_rows, bf16.NEG_INF, dtype=np.uint16)
        if acc is AccumPolicy.FAITHFUL:
            return RowStats(m, np.zeros(n_rows, dtype=np.uint16))
        return RowStats(m, np.zeros(n_rows, dtype=np.float64))


def _rows_view(row) -> tuple[np.ndarray, bool]:
    a = np.asarray(row, dtype=np.uint16)
    if a.ndim == 1:
        a = a[None, :]
        single = True
    elif a.ndim == 2:
        single = False
    else:
        raise ValueError(f"expected a row or batch of rows, got shape {a.shape}")
    if a.shape[1] == 0:
        raise ValueError("empty row")
    return a, single


def _max_phase(x: np.ndarray) -> np.ndarray:
    """vfmax over packed groups, horizontal reduce, scalar tail."""
    n = x.shape[1]
    groups = n // LANES
    lanes = np.full((x.shape[0], LANES), bf16.NEG_INF, dtype=np.uint16)
    for g in range(groups):
        lanes = bf16.fmax(lanes, x[:, LANES * g:LANES * (g + 1)])
    m = bf16.fmax(bf16.fmax(lanes[:, 0], lanes[:, 1]),
                  bf16.fmax(lanes[:, 2], lanes[:, 3]))
    for j in range(LANES * groups, n):
        m = bf16.fmax(m, x[:, j])
    return m


def _exp_phase(x, m, params, acc):
    """Weights exp(x - m) plus the block sum in the accumulator policy's
    precision. Lane accumulators start at +0 so short rows stay exact."""
    n = x.shape[1]
    groups, tail0 = n // LANES, (n // LANES) * LANES
    table = exp_table(params)
    w = np.empty_like(x)
    mcol = m[:, None]
    if acc is AccumPolicy.FAITHFUL:
        lanes = np.zeros((x.shape[0], LANES), dtype=np.uint16)
        for g in range(groups):
            wg = table[bf16.sub(x[:, LANES * g:LANES * (g + 1)], mcol)]
            w[:, LANES * g:LANES * (g + 1)] = wg
            lanes = bf16.add(lanes, wg)
        s = bf16.add(bf16.add(lanes[:, 0], lanes[:, 1]),
                     bf16.add(lanes[:, 2], lanes[:, 3]))
        for j in range(tail0, n):
            wj = table[bf16.sub(x[:, j], m)]
            w[:, j] = wj
            s = bf16.add(s, wj)
    else:
        for g in range(groups):
            w[:, LANES * g:LANES * (g + 1)] = \
                table[bf16.sub(x[:, LANES * g:LANES * (g + 1)], mcol)]
        for j in range(tail0, n):
            w[:, j] = table[bf16.sub(x[:, j], m)]
        s = bf16.to_float(w).sum(axis=1)
    return w, s


def partial_softmax_update(stats: RowStats, block, params: ExpUnitParams = DEFAULT,
                           acc: AccumPolicy = AccumPolicy.FAITHFUL):
    """One block of the online softmax.

    m' = max(m, max(block)); rescale = exp(m - m');
    l' = rescale*l + sum(exp(block - m')). Returns the new stats, the
    block's weights exp(block_i - m'), and the rescale factor (one BF16
    pattern per row, exp(-inf) = 0 on the first block).
    """
    x, _ = _rows_view(block)
    if stats.m.shape != (x.shape[0],):
        raise ValueError("stats row count does not match block")
    m_new = bf16.fmax(stats.m, _max_phase(x))
    w, block_sum = _exp_phase(x, m_new, params, acc)
    rescale = exp_table(params)[bf16.sub(stats.m, m_new)]
    if acc is AccumPolicy.FAITHFUL:
        l_new = bf16.add(bf16.mul(rescale, stats.l), block_sum)
    else:
        l_new = bf16.to_float(rescale) * stats.l + block_sum
    return RowStats(m_new, l_new), w, rescale


def finalize_softmax(stats: RowStats, weights: np.ndarray,
                     acc: AccumPolicy = AccumPolicy.FAITHFUL) -> np.ndarray:
    """NORM phase: one reciprocal (or wide divide), then scale the weights."""
    if acc is AccumPolicy.FAITHFUL:
        r = bf16.recip(stats.l)
        return bf16.mul(weights, r[:, None])
    return bf16.from_float(bf16.to_float(weights) / stats.l[:, None])


def softmax_optimized(row, params: ExpUnitParams = DEFAULT,
                      acc: AccumPolicy = AccumPolicy.FAITHFUL) -> np.ndarray:
    """MAX/EXP/NORM softmax; the whole row is one online-softmax block."""
    x, single = _rows_view(row)
    stats, w, _ = partial_softmax_update(RowStats.fresh(x.shape[0], acc), x,
                                         params, acc)
    y = finalize_softmax(stats, w, acc)
    return y[0] if single else y


def softmax_baseline(row) -> np.ndarray:
    """Scalar reference kernel: running max, correctly rounded exponential,
    sequential BF16 sum, then a division per element."""
    x, single = _rows_view(row)
    n = x.shape[1]
    m = x[:, 0]
    for j in range(1, n):
        m = bf16.fmax(m, x[:, j])
    e = np.empty_like(x)
    for j in range(n):
        # f64 exp then one rounding; f64 error is far below half a BF16 ulp
        e[:, j] = bf16.from_float(np.exp(bf16.to_float(bf16.sub(x[:, j], m))))
    s = e[:, 0]
    for j in range(1, n):
        s = bf16.add(s, e[:, j])
    y = bf16.div(e, s[:, None])
    return y[0] if single else y


def softmax_reference(row) -> np.ndarray:
    """Real-arithmetic (float64) softmax with max subtraction."""
    x = np.asarray(row, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ValueError(f"expected a row or batch of rows, got shape {x.shape}")
    if x.shape[1] == 0:
        raise ValueError("empty row")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite logits")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    y = e / e.sum(axis=1, keepdims=True)
    return y[0] if single else y


# ---------------------------------------------------------------------------
# attention


def gemm_bf16(a, b) -> np.ndarray:
    """Matrix product with expanding-dot-product semantics: accumulate in
    float64, round each output once."""
    A = np.asarray(a, dtype=np.uint16)
    B = np.asarray(b, dtype=np.uint16)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("gemm_bf16 needs 2-D operands")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"inner dimensions differ: {A.shape} x {B.shape}")
    return bf16.from_float(bf16.to_float(A) @ bf16.to_float(B))


@dataclass(frozen=True)
class AttentionConfig:
    seq_len_q: int
    seq_len_kv: int
    head_dim: int
    tile_q: int
    tile_kv: int
    scale: float

    def __post_init__(self):
        for field in ("seq_len_q", "seq_len_kv", "head_dim", "tile_q", "tile_kv"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")

    @classmethod
    def for_head(cls, seq_len_q: int, seq_len_kv: int, head_dim: int,
                 tile_q: int | None = None, tile_kv: int | None = None,
                 scale: float | None = None) -> "AttentionConfig":
        return cls(
            seq_len_q=seq_len_q,
            seq_len_kv=seq_len_kv,
            head_dim=head_dim,
            tile_q=min(tile_q or 16, seq_len_q),
            tile_kv=min(tile_kv or 16, seq_len_kv),
            scale=scale if scale is not None else 1.0 / math.sqrt(head_dim),
        )


def _check_attention_shapes(Q, K, V, cfg):
    want = {
        "Q": (cfg.seq_len_q, cfg.head_dim),
        "K": (cfg.seq_len_kv, cfg.head_dim),
        "V": (cfg.seq_len_kv, cfg.head_dim),
    }
    for name, mat in (("Q", Q), ("K", K), ("V", V)):
        if mat.shape != want[name]:
            raise ValueError(f"{name} shape {mat.shape}, config wants {want[name]}")


def flash_attention_2(Q, K, V, cfg: AttentionConfig,
                      params: ExpUnitParams = DEFAULT,
                      acc: AccumPolicy = AccumPolicy.FAITHFUL) -> np.ndarray:
    """Tiled attention with online softmax.

    Per Q tile: iterate KV tiles, S = scale * (Q_t @ K_t.T) in BF16,
    online-softmax update per row, output accumulator rescaled then
    incremented with weights @ V_t, final division by the row sum l.
    """
    Q = np.asarray(Q, dtype=np.uint16)
    K = np.asarray(K, dtype=np.uint16)
    V = np.asarray(V, dtype=np.uint16)
    _check_attention_shapes(Q, K, V, cfg)
    scale_pat = bf16.from_float(cfg.scale)
    out = np.empty((cfg.seq_len_q, cfg.head_dim), dtype=np.uint16)
    for q0 in range(0, cfg.seq_len_q, cfg.tile_q):
        qt = Q[q0:q0 + cfg.tile_q]
        rows = qt.shape[0]
        stats = RowStats.fresh(rows, acc)
        if acc is AccumPolicy.FAITHFUL:
            o = np.zeros((rows, cfg.head_dim), dtype=np.uint16)
        else:
            o = np.zeros((rows, cfg.head_dim), dtype=np.float64)
        for k0 in range(0, cfg.seq_len_kv, cfg.tile_kv):
            kt = K[k0:k0 + cfg.tile_kv]
            vt = V[k0:k0 + cfg.tile_kv]
            s = bf16.mul(gemm_bf16(qt, kt.T), scale_pat)
            stats, w, rescale = partial_softmax_update(stats, s, params, acc)
            pv = gemm_bf16(w, vt)
            if acc is AccumPolicy.FAITHFUL:
                o = bf16.add(bf16.mul(o, rescale[:, None]), pv)
            else:
                o = o * bf16.to_float(rescale)[:, None] + bf16.to_float(pv)
        if acc is AccumPolicy.FAITHFUL:
            out[q0:q0 + rows] = bf16.mul(o, bf16.recip(stats.l)[:, None])
        else:
            out[q0:q0 + rows] = bf16.from_float(o / stats.l[:, None])
    return out


def attention_reference(Q, K, V, scale: float) -> np.ndarray:
    """Untiled float64 oracle: softmax(scale * Q K^T) V on the decoded
    pattern values. Returns float64, not patterns."""
    q = bf16.to_float(np.asarray(Q, dtype=np.uint16))
    k = bf16.to_float(np.asarray(K, dtype=np.uint16))
    v = bf16.to_float(np.asarray(V, dtype=np.uint16))
    return softmax_reference(scale * (q @ k.T)) @ v
