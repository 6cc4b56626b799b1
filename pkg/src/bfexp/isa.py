"""Encoder/decoder for the scalar and packed exponential instructions.

Both live in the standard floating-point major opcode space (0x53) as
R-type words with rs2 = 0 and funct3 = 0:

    [31:25] funct7   0011111 scalar, 1011111 vector (MSB picks the lane form)
    [24:20] 00000
    [19:15] rs1
    [14:12] 000
    [11:7]  rd
    [6:0]   1010011
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

OPCODE_FP = 0b1010011


class ExpOp(enum.Enum):
    """funct7 selector for the two instruction forms."""

    FEXP = 0b0011111
    VFEXP = 0b1011111


class NotAnExpInstruction(ValueError):
    """Word does not match either instruction template."""


@dataclass(frozen=True)
class ExpInstruction:
    op: ExpOp
    rd: int
    rs1: int

    def __post_init__(self):
        if not isinstance(self.op, ExpOp):
            raise ValueError(f"op must be an ExpOp, got {self.op!r}")
        for name in ("rd", "rs1"):
            v = getattr(self, name)
            if not 0 <= v <= 31:
                raise ValueError(f"{name}={v} outside [0, 31]")

    @property
    def mnemonic(self) -> str:
        return self.op.name.lower()


def encode(instr: ExpInstruction) -> int:
    return (instr.op.value << 25) | (instr.rs1 << 15) | (instr.rd << 7) | OPCODE_FP


def decode(word: int) -> ExpInstruction:
    if not 0 <= word < (1 << 32):
        raise NotAnExpInstruction(f"not a 32-bit word: {word:#x}")
    if word & 0x7F != OPCODE_FP:
        raise NotAnExpInstruction(f"{word:#010x}: wrong major opcode")
    funct7 = word >> 25
    try:
        op = ExpOp(funct7)
    except ValueError:
        raise NotAnExpInstruction(f"{word:#010x}: funct7 {funct7:#09b} unknown") from None
    if (word >> 20) & 0x1F:
        raise NotAnExpInstruction(f"{word:#010x}: rs2 field must be zero")
    if (word >> 12) & 0x7:
        raise NotAnExpInstruction(f"{word:#010x}: funct3 must be zero")
    return ExpInstruction(op, rd=(word >> 7) & 0x1F, rs1=(word >> 15) & 0x1F)
