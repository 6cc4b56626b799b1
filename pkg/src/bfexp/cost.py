"""Instruction/cycle cost model for kernel schedules.

A Schedule is a list of hardware loops plus a fixed per-row overhead
(loop setup, horizontal reductions, the reciprocal). Loops issue one
instruction per cycle to the FPU (hardware-loop + stream-register
execution: fully pipelined, no fetch or address instructions); stream
operands cost nothing. A loop flagged charge_latency models the lone-op
microbenchmark convention instead, where each issue is billed the op's
full latency: a standalone 4-wide exponential with a 2-cycle latency
comes out at exactly 0.5 cycles/output, which is how that kernel is
quoted, while inside a fused softmax loop the same instruction
contributes its 1-cycle issue slot.

The scalar baseline's loops price each op at its effective scalar cost
(FPU latency exposed, explicit loads and branches); its per-phase split
is calibrated so the aggregate lands on the reference counts of 56
instructions and 360 cycles per output, 319 of them in the software
exponential call.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ScheduleOp:
    name: str
    count_per_iteration: int = 1
    issue_cost_cycles: int = 1
    latency_cycles: int = 1
    simd_width: int = 1
    stream: bool = False

    def __post_init__(self):
        if self.count_per_iteration < 1:
            raise ValueError(f"{self.name}: count_per_iteration must be >= 1")
        if self.stream:
            if self.issue_cost_cycles != 0:
                raise ValueError(f"{self.name}: stream operands cost 0 cycles")
        elif self.issue_cost_cycles < 1:
            raise ValueError(f"{self.name}: issue cost must be >= 1")
        if self.latency_cycles < 0 or self.simd_width not in (1, 4):
            raise ValueError(f"{self.name}: bad latency or simd width")


@dataclass(frozen=True)
class Loop:
    name: str
    ops: tuple[ScheduleOp, ...]
    outputs_per_iteration: int = 1
    charge_latency: bool = False
    tag: str = ""

    def __post_init__(self):
        if not self.ops:
            raise ValueError(f"loop {self.name}: no ops")
        if self.outputs_per_iteration < 1:
            raise ValueError(f"loop {self.name}: outputs_per_iteration must be >= 1")

    @property
    def instructions_per_iteration(self) -> int:
        return sum(op.count_per_iteration for op in self.ops if not op.stream)

    @property
    def cycles_per_iteration(self) -> int:
        total = 0
        for op in self.ops:
            if op.stream:
                continue
            per = op.latency_cycles if self.charge_latency else op.issue_cost_cycles
            total += op.count_per_iteration * per
        return total


@dataclass(frozen=True)
class Schedule:
    name: str
    loops: tuple[Loop, ...]
    row_overhead_instructions: int = 0
    row_overhead_cycles: int = 0
    overhead_tag: str = ""
    description: str = ""

    def __post_init__(self):
        if not self.loops:
            raise ValueError(f"schedule {self.name}: no loops")
        if self.row_overhead_instructions < 0 or self.row_overhead_cycles < 0:
            raise ValueError(f"schedule {self.name}: negative overhead")


@dataclass(frozen=True)
class CostReport:
    schedule: str
    outputs: int
    rows: int
    total_instructions: int
    total_cycles: int
    breakdown: tuple[tuple[str, str, int, int], ...] = field(default_factory=tuple)

    @property
    def instructions_per_output(self) -> float:
        return self.total_instructions / self.outputs

    @property
    def cycles_per_output(self) -> float:
        return self.total_cycles / self.outputs

    def cycles_with_tag(self, tag: str) -> int:
        return sum(c for _, t, _, c in self.breakdown if t == tag)

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule,
            "outputs": self.outputs,
            "rows": self.rows,
            "total_instructions": self.total_instructions,
            "total_cycles": self.total_cycles,
            "instructions_per_output": self.instructions_per_output,
            "cycles_per_output": self.cycles_per_output,
            "breakdown": [
                {"part": n, "tag": t, "instructions": i, "cycles": c}
                for n, t, i, c in self.breakdown
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    CSV_FIELDS = ("schedule", "outputs", "rows", "total_instructions",
                  "total_cycles", "instructions_per_output", "cycles_per_output")

    @classmethod
    def csv_header(cls) -> str:
        buf = io.StringIO()
        csv.writer(buf).writerow(cls.CSV_FIELDS)
        return buf.getvalue()

    def to_csv_row(self) -> str:
        d = self.to_dict()
        buf = io.StringIO()
        csv.writer(buf).writerow([d[k] for k in self.CSV_FIELDS])
        return buf.getvalue()


def cost_of_schedule(schedule: Schedule, n_outputs: int, rows: int = 1) -> CostReport:
    if n_outputs < 1:
        raise ValueError("n_outputs must be >= 1")
    if rows < 1:
        raise ValueError("rows must be >= 1")
    parts = []
    instr = cycles = 0
    for loop in schedule.loops:
        iters = math.ceil(n_outputs / loop.outputs_per_iteration)
        li = iters * loop.instructions_per_iteration
        lc = iters * loop.cycles_per_iteration
        parts.append((loop.name, loop.tag, li, lc))
        instr += li
        cycles += lc
    if schedule.row_overhead_instructions or schedule.row_overhead_cycles:
        oi = rows * schedule.row_overhead_instructions
        oc = rows * schedule.row_overhead_cycles
        parts.append(("row overhead", schedule.overhead_tag, oi, oc))
        instr += oi
        cycles += oc
    return CostReport(schedule.name, n_outputs, rows, instr, cycles, tuple(parts))


def speedup(baseline: CostReport, optimized: CostReport) -> float:
    if baseline.outputs != optimized.outputs:
        raise ValueError("reports cover different output counts")
    return baseline.total_cycles / optimized.total_cycles


# ---------------------------------------------------------------------------
# built-in schedules


def _expf_call_ops() -> tuple[ScheduleOp, ...]:
    # software exponential: 45 instructions, 319 cycles per call in total;
    # the split below is illustrative, only the aggregate is calibrated
    return (
        ScheduleOp("fld coeff/table", 8, 3, 3),
        ScheduleOp("fmadd.d poly chain", 24, 11, 11),
        ScheduleOp("int scale/extract", 10, 2, 2),
        ScheduleOp("range branch", 1, 3, 3),
        ScheduleOp("jal/jalr", 2, 4, 4),
    )


def baseline_softmax_schedule() -> Schedule:
    """Plain scalar loop: no streams, no hardware loop, FPU latency exposed."""
    return Schedule(
        name="baseline",
        description="scalar softmax, software exponential (319 cycles/call)",
        loops=(
            Loop("max", (
                ScheduleOp("flw", 1, 2, 2),
                ScheduleOp("fmax.s", 1, 4, 4),
                ScheduleOp("addr/branch", 1, 3, 3),
            ), tag="softmax"),
            Loop("exp", (
                ScheduleOp("fsub.s", 1, 4, 4),
                *_expf_call_ops(),
                ScheduleOp("fsw", 1, 2, 2),
                ScheduleOp("addr/branch", 2, 3, 3),
            ), tag="softmax"),
            Loop("norm", (
                ScheduleOp("flw", 1, 2, 2),
                ScheduleOp("fdiv.s", 1, 13, 13),
                ScheduleOp("fsw", 1, 2, 2),
                ScheduleOp("addr/branch", 1, 3, 3),
            ), tag="softmax"),
        ),
    )


# per-row overhead of the stream/hardware-loop kernels, calibrated at the
# reference row length 64: stream setup 6i/12c, loop setup 3i/3c,
# horizontal max 3i/12c, horizontal sum 3i/12c, reciprocal 1i/14c,
# pipeline drain 3c
_OPT_OVERHEAD = (16, 56)


def _stream(name: str) -> ScheduleOp:
    return ScheduleOp(name, 1, 0, 0, stream=True)


def optimized_softmax_schedule() -> Schedule:
    """4-wide SIMD softmax with the hardware exponential (sw-exp-hw)."""
    oi, oc = _OPT_OVERHEAD
    return Schedule(
        name="sw-exp-hw",
        description="stream+hardware-loop softmax, VFEXP exponential; "
                    "per-row overheads calibrated at row length 64",
        loops=(
            Loop("max", (_stream("x in"), ScheduleOp("vfmax", 1, 1, 2, 4)),
                 outputs_per_iteration=4, tag="softmax"),
            Loop("exp", (
                _stream("x in"), _stream("w out"),
                ScheduleOp("vfsub", 1, 1, 2, 4),
                ScheduleOp("vfexp", 1, 1, 2, 4),
                ScheduleOp("vfadd", 1, 1, 2, 4),
            ), outputs_per_iteration=4, tag="softmax"),
            Loop("norm", (
                _stream("w in"), _stream("y out"),
                ScheduleOp("vfmul", 1, 1, 2, 4),
            ), outputs_per_iteration=4, tag="softmax"),
        ),
        row_overhead_instructions=oi,
        row_overhead_cycles=oc,
        overhead_tag="softmax",
    )


def sw_schraudolph_softmax_schedule() -> Schedule:
    """Stream+hardware-loop softmax, exponential in software (sw-exp-sw):
    shift-and-add integer pipeline on unpacked lanes."""
    oi, oc = _OPT_OVERHEAD
    return Schedule(
        name="sw-exp-sw",
        description="stream+hardware-loop softmax, software shift-based exponential",
        loops=(
            Loop("max", (_stream("x in"), ScheduleOp("vfmax", 1, 1, 2, 4)),
                 outputs_per_iteration=4, tag="softmax"),
            Loop("exp", (
                _stream("x in"), _stream("w out"),
                ScheduleOp("vfsub", 1, 1, 2, 4),
                ScheduleOp("lane unpack/repack", 21, 2, 2),
                ScheduleOp("int exp arith", 15, 1, 1),
                ScheduleOp("vfadd", 1, 1, 2, 4),
            ), outputs_per_iteration=4, tag="softmax"),
            Loop("norm", (
                _stream("w in"), _stream("y out"),
                ScheduleOp("vfmul", 1, 1, 2, 4),
            ), outputs_per_iteration=4, tag="softmax"),
        ),
        row_overhead_instructions=oi,
        row_overhead_cycles=oc,
        overhead_tag="softmax",
    )


def sw_optimized_softmax_schedule() -> Schedule:
    """Streams and hardware loops but still the 319-cycle software
    exponential call per element (sw-opt)."""
    oi, oc = _OPT_OVERHEAD
    return Schedule(
        name="sw-opt",
        description="stream+hardware-loop softmax, scalar software exponential",
        loops=(
            Loop("max", (_stream("x in"), ScheduleOp("vfmax", 1, 1, 2, 4)),
                 outputs_per_iteration=4, tag="softmax"),
            Loop("exp", (
                ScheduleOp("fsub.s", 1, 4, 4),
                ScheduleOp("lane move/cvt", 2, 2, 2),
                *_expf_call_ops(),
                ScheduleOp("lane insert", 2, 2, 2),
            ), tag="softmax"),
            Loop("norm", (
                _stream("w in"), _stream("y out"),
                ScheduleOp("vfmul", 1, 1, 2, 4),
            ), outputs_per_iteration=4, tag="softmax"),
        ),
        row_overhead_instructions=oi,
        row_overhead_cycles=oc,
        overhead_tag="softmax",
    )


def vfexp_microbenchmark_schedule() -> Schedule:
    """A lone 4-wide exponential in a steady-state hardware loop, billed
    at its full 2-cycle latency per issue."""
    return Schedule(
        name="vfexp-micro",
        description="standalone VFEXP stream kernel",
        loops=(
            Loop("exp", (_stream("x in"), _stream("y out"),
                         ScheduleOp("vfexp", 1, 1, 2, 4)),
                 outputs_per_iteration=4, charge_latency=True, tag="exp"),
        ),
    )


def _gemm_loop(name: str, head_dim: int) -> Loop:
    if head_dim % 4:
        raise ValueError("head_dim must be a multiple of 4")
    return Loop(name, (
        _stream("a in"), _stream("b in"),
        ScheduleOp("vfdotpex", head_dim // 4, 1, 3, 4),
    ), tag="gemm")


def attention_schedule(head_dim: int, optimized: bool = True) -> Schedule:
    """Per-score accounting of tiled attention: both GEMMs charge one
    4-wide expanding dot-product op per 4 inner elements per score; the
    softmax phases ride between them."""
    softmax = optimized_softmax_schedule() if optimized \
        else baseline_softmax_schedule()
    return Schedule(
        name=f"fa-{'optimized' if optimized else 'baseline'}",
        description=f"tiled attention, head_dim={head_dim}, "
                    f"softmax={softmax.name}",
        loops=(_gemm_loop("qk gemm", head_dim),
               *softmax.loops,
               _gemm_loop("pv gemm", head_dim)),
        row_overhead_instructions=softmax.row_overhead_instructions,
        row_overhead_cycles=softmax.row_overhead_cycles,
        overhead_tag=softmax.overhead_tag,
    )


def attention_cost(seq_len_q: int, seq_len_kv: int, head_dim: int,
                   tile_kv: int = 64, optimized: bool = True
                   ) -> tuple[CostReport, float]:
    """Cost of one attention head plus the softmax share of its cycles.
    Row overheads are charged once per (query row, KV tile) update."""
    sched = attention_schedule(head_dim, optimized)
    updates = seq_len_q * math.ceil(seq_len_kv / tile_kv)
    report = cost_of_schedule(sched, seq_len_q * seq_len_kv, rows=updates)
    share = report.cycles_with_tag("softmax") / report.total_cycles
    return report, share


BUILTIN_SCHEDULES = {
    "baseline": baseline_softmax_schedule,
    "sw-opt": sw_optimized_softmax_schedule,
    "sw-exp-sw": sw_schraudolph_softmax_schedule,
    "sw-exp-hw": optimized_softmax_schedule,
    "vfexp-micro": vfexp_microbenchmark_schedule,
}


# ---------------------------------------------------------------------------
# schedule files


def _parse_op(name: str, value: str) -> ScheduleOp:
    kw = {"name": name}
    for tok in value.split():
        if tok == "stream":
            kw["stream"] = True
            kw["issue_cost_cycles"] = 0
            kw["latency_cycles"] = 0
            continue
        k, _, v = tok.partition("=")
        field_map = {"count": "count_per_iteration", "issue": "issue_cost_cycles",
                     "latency": "latency_cycles", "simd": "simd_width"}
        if k not in field_map or not v:
            raise ValueError(f"op {name}: bad token {tok!r}")
        kw[field_map[k]] = int(v)
    return ScheduleOp(**kw)


def load_schedule(path) -> Schedule:
    """Schedule from an INI-style file: a [schedule] section for the
    name/overheads, one [loop.NAME] section per loop in order, with one
    op.NAME key per op (value: "count=1 issue=1 latency=2 simd=4" or
    "stream")."""
    cp = configparser.ConfigParser()
    cp.optionxform = str        # op names are case-sensitive
    with open(path) as f:
        cp.read_file(f)
    if "schedule" not in cp:
        raise ValueError(f"{path}: missing [schedule] section")
    head = cp["schedule"]
    loops = []
    for section in cp.sections():
        if not section.startswith("loop."):
            continue
        sec = cp[section]
        ops = tuple(_parse_op(key[3:], sec[key]) for key in sec
                    if key.startswith("op."))
        loops.append(Loop(
            name=section[5:],
            ops=ops,
            outputs_per_iteration=sec.getint("outputs_per_iteration", 1),
            charge_latency=sec.getboolean("charge_latency", False),
            tag=sec.get("tag", ""),
        ))
    return Schedule(
        name=head.get("name", "unnamed"),
        loops=tuple(loops),
        row_overhead_instructions=head.getint("row_overhead_instructions", 0),
        row_overhead_cycles=head.getint("row_overhead_cycles", 0),
        overhead_tag=head.get("overhead_tag", ""),
        description=head.get("description", ""),
    )
