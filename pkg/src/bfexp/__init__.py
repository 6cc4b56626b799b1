"""Bit-exact BF16 exponential unit, softmax/attention kernels, the
matching instruction codec and a schedule cost model."""

from . import bf16, matio
from .cost import (
    BUILTIN_SCHEDULES,
    CostReport,
    Loop,
    Schedule,
    ScheduleOp,
    attention_cost,
    cost_of_schedule,
    load_schedule,
    speedup,
)
from .expunit import DEFAULT, ExpUnitParams, exp_bf16, exp_map, exp_table, vfexp
from .isa import ExpInstruction, ExpOp, NotAnExpInstruction, decode, encode
from .kernels import (
    AccumPolicy,
    AttentionConfig,
    RowStats,
    attention_reference,
    finalize_softmax,
    flash_attention_2,
    gemm_bf16,
    partial_softmax_update,
    softmax_baseline,
    softmax_optimized,
    softmax_reference,
)

__version__ = "0.1.0"

__all__ = [
    "AccumPolicy",
    "AttentionConfig",
    "BUILTIN_SCHEDULES",
    "CostReport",
    "DEFAULT",
    "ExpInstruction",
    "ExpOp",
    "ExpUnitParams",
    "Loop",
    "NotAnExpInstruction",
    "RowStats",
    "Schedule",
    "ScheduleOp",
    "attention_cost",
    "attention_reference",
    "bf16",
    "cost_of_schedule",
    "decode",
    "encode",
    "exp_bf16",
    "exp_map",
    "exp_table",
    "finalize_softmax",
    "flash_attention_2",
    "gemm_bf16",
    "load_schedule",
    "matio",
    "partial_softmax_update",
    "softmax_baseline",
    "softmax_optimized",
    "softmax_reference",
    "speedup",
    "vfexp",
]
