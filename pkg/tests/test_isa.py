"""Instruction codec: template words, exhaustive round trip, rejections."""

import pytest

from bfexp.isa import ExpInstruction, ExpOp, NotAnExpInstruction, decode, encode


def test_template_words():
    # mechanical substitution of rd=1, rs1=2 into the two encoding templates
    assert encode(ExpInstruction(ExpOp.FEXP, rd=1, rs1=2)) == 0x3E0100D3
    assert encode(ExpInstruction(ExpOp.VFEXP, rd=1, rs1=2)) == 0xBE0100D3
    assert encode(ExpInstruction(ExpOp.FEXP, rd=0, rs1=0)) == 0x3E000053
    assert decode(0x3E0100D3) == ExpInstruction(ExpOp.FEXP, rd=1, rs1=2)
    assert decode(0xBE0100D3) == ExpInstruction(ExpOp.VFEXP, rd=1, rs1=2)


def test_vector_form_differs_only_in_msb():
    for rd, rs1 in [(0, 0), (1, 2), (31, 31), (17, 5)]:
        ws = encode(ExpInstruction(ExpOp.FEXP, rd, rs1))
        wv = encode(ExpInstruction(ExpOp.VFEXP, rd, rs1))
        assert wv == ws | (1 << 31)


def test_round_trip_exhaustive():
    seen = set()
    for op in ExpOp:
        for rd in range(32):
            for rs1 in range(32):
                instr = ExpInstruction(op, rd, rs1)
                word = encode(instr)
                assert decode(word) == instr
                seen.add(word)
    assert len(seen) == 2 * 32 * 32


def test_decode_rejections():
    for word in (
        0x00000013,    # canonical NOP
        0x3E0100D0,    # wrong major opcode
        0x3E1000D3,    # nonzero rs2 field (a shifted-field transcription slip)
        0x3E0110D3,    # nonzero funct3
        0x7E0100D3,    # unknown funct7
        -1,
        1 << 32,
    ):
        with pytest.raises(NotAnExpInstruction):
            decode(word)


def test_instruction_validation():
    with pytest.raises(ValueError):
        ExpInstruction(ExpOp.FEXP, rd=32, rs1=0)
    with pytest.raises(ValueError):
        ExpInstruction(ExpOp.VFEXP, rd=0, rs1=-1)
    with pytest.raises(ValueError):
        ExpInstruction("fexp", rd=0, rs1=0)
    assert ExpInstruction(ExpOp.VFEXP, 3, 4).mnemonic == "vfexp"
