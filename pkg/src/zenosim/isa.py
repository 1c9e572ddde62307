"""Instruction set: rv64i subset, extended-register loads/stores and namespace ops."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Fmt(enum.Enum):
    R = "rd, rs1, rs2"
    I = "rd, rs1, imm"
    SHIFT = "rd, rs1, shamt"
    U = "rd, imm20"
    LI = "rd, imm64"
    B = "rs1, rs2, label"
    JAL = "rd, label"
    JALR = "rd, imm(rs1)"
    LOAD = "rd, imm(rs1)"
    STORE = "rs2, imm(rs1)"
    ELOAD = "rd, imm(rs1), ers1"
    ESTORE = "rs2, imm(rs1), ers1"
    CLOAD = "erd, imm(rs1)"
    CSTORE = "ers2, imm(rs1)"
    ECLOAD = "erd, imm(rs1), ers1"
    ECSTORE = "ers2, imm(rs1), ers1"
    EMOV_EE = "erd, ers1"
    EMOV_EX = "erd, rs1"
    EMOV_XE = "rd, ers1"
    NS_CREATE = "erd, rs1, rs2, rs3"
    NS_DERIVE = "erd, ers1, rs1, rs2, rs3"
    NS_REVOKE = "rd, ers1"
    ERS = "ers1"
    IMM = "imm"
    NONE = ""


class Op(enum.IntEnum):
    ADD = enum.auto()
    SUB = enum.auto()
    AND = enum.auto()
    OR = enum.auto()
    XOR = enum.auto()
    SLL = enum.auto()
    SRL = enum.auto()
    SRA = enum.auto()
    SLT = enum.auto()
    SLTU = enum.auto()
    ADDI = enum.auto()
    ANDI = enum.auto()
    ORI = enum.auto()
    XORI = enum.auto()
    SLTI = enum.auto()
    SLTIU = enum.auto()
    SLLI = enum.auto()
    SRLI = enum.auto()
    SRAI = enum.auto()
    LUI = enum.auto()
    AUIPC = enum.auto()
    LI = enum.auto()
    BEQ = enum.auto()
    BNE = enum.auto()
    BLT = enum.auto()
    BGE = enum.auto()
    BLTU = enum.auto()
    BGEU = enum.auto()
    JAL = enum.auto()
    JALR = enum.auto()
    LB = enum.auto()
    LBU = enum.auto()
    LH = enum.auto()
    LHU = enum.auto()
    LW = enum.auto()
    LWU = enum.auto()
    LD = enum.auto()
    SB = enum.auto()
    SH = enum.auto()
    SW = enum.auto()
    SD = enum.auto()
    ELB = enum.auto()
    ELBU = enum.auto()
    ELH = enum.auto()
    ELHU = enum.auto()
    ELW = enum.auto()
    ELWU = enum.auto()
    ELD = enum.auto()
    ESB = enum.auto()
    ESH = enum.auto()
    ESW = enum.auto()
    ESD = enum.auto()
    CLD = enum.auto()
    CSD = enum.auto()
    ECLD = enum.auto()
    ECSD = enum.auto()
    EMOV_EE = enum.auto()
    EMOV_EX = enum.auto()
    EMOV_XE = enum.auto()
    NS_CREATE = enum.auto()
    NS_DERIVE = enum.auto()
    NS_REVOKE = enum.auto()
    RC_INVAL = enum.auto()
    RC_FLUSH = enum.auto()
    BARRIER = enum.auto()
    STAT_MARK = enum.auto()
    HALT = enum.auto()

    @property
    def mnemonic(self) -> str:
        return MNEMONIC[self]

    @property
    def fmt(self) -> Fmt:
        return FORMAT[self]


FORMAT: dict[Op, Fmt] = {}
MNEMONIC: dict[Op, str] = {}


def _define(fmt: Fmt, *ops: Op) -> None:
    for op in ops:
        FORMAT[op] = fmt
        MNEMONIC[op] = op.name.lower().replace("ns_", "ns.").replace("rc_", "rc.").replace("stat_", "stat.")


_define(Fmt.R, Op.ADD, Op.SUB, Op.AND, Op.OR, Op.XOR, Op.SLL, Op.SRL, Op.SRA, Op.SLT, Op.SLTU)
_define(Fmt.I, Op.ADDI, Op.ANDI, Op.ORI, Op.XORI, Op.SLTI, Op.SLTIU)
_define(Fmt.SHIFT, Op.SLLI, Op.SRLI, Op.SRAI)
_define(Fmt.U, Op.LUI, Op.AUIPC)
_define(Fmt.LI, Op.LI)
_define(Fmt.B, Op.BEQ, Op.BNE, Op.BLT, Op.BGE, Op.BLTU, Op.BGEU)
_define(Fmt.JAL, Op.JAL)
_define(Fmt.JALR, Op.JALR)
_define(Fmt.LOAD, Op.LB, Op.LBU, Op.LH, Op.LHU, Op.LW, Op.LWU, Op.LD)
_define(Fmt.STORE, Op.SB, Op.SH, Op.SW, Op.SD)
_define(Fmt.ELOAD, Op.ELB, Op.ELBU, Op.ELH, Op.ELHU, Op.ELW, Op.ELWU, Op.ELD)
_define(Fmt.ESTORE, Op.ESB, Op.ESH, Op.ESW, Op.ESD)
_define(Fmt.CLOAD, Op.CLD)
_define(Fmt.CSTORE, Op.CSD)
_define(Fmt.ECLOAD, Op.ECLD)
_define(Fmt.ECSTORE, Op.ECSD)
_define(Fmt.EMOV_EE, Op.EMOV_EE)
_define(Fmt.EMOV_EX, Op.EMOV_EX)
_define(Fmt.EMOV_XE, Op.EMOV_XE)
_define(Fmt.NS_CREATE, Op.NS_CREATE)
_define(Fmt.NS_DERIVE, Op.NS_DERIVE)
_define(Fmt.NS_REVOKE, Op.NS_REVOKE)
_define(Fmt.ERS, Op.RC_INVAL)
_define(Fmt.NONE, Op.RC_FLUSH, Op.BARRIER, Op.HALT)
_define(Fmt.IMM, Op.STAT_MARK)
for _op in (Op.EMOV_EE, Op.EMOV_EX, Op.EMOV_XE):
    MNEMONIC[_op] = "emov"

# (size in bytes, sign-extend) for every load; size for every store.
LOAD_WIDTH = {
    Op.LB: (1, True), Op.LBU: (1, False), Op.LH: (2, True), Op.LHU: (2, False),
    Op.LW: (4, True), Op.LWU: (4, False), Op.LD: (8, False),
    Op.ELB: (1, True), Op.ELBU: (1, False), Op.ELH: (2, True), Op.ELHU: (2, False),
    Op.ELW: (4, True), Op.ELWU: (4, False), Op.ELD: (8, False),
}
STORE_WIDTH = {Op.SB: 1, Op.SH: 2, Op.SW: 4, Op.SD: 8, Op.ESB: 1, Op.ESH: 2, Op.ESW: 4, Op.ESD: 8}

# Namespace-create flag bits carried in the permission operand.
FLAG_READ = 1
FLAG_WRITE = 2
FLAG_EXEC = 4
FLAG_LOCAL = 8  # place every page on the creating node instead of interleaving

INSTR_BYTES = 4


@dataclass(frozen=True)
class Instruction:
    op: Op
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    rs3: int = 0
    erd: int = 0
    ers1: int = 0
    ers2: int = 0
    imm: int = 0
    source_line: int = field(default=0, compare=False)

    @property
    def is_branch(self) -> bool:
        return FORMAT[self.op] in (Fmt.B, Fmt.JAL)

    def source_registers(self) -> int:
        """Number of distinct register reads (integer + extended)."""
        names = {
            Fmt.NS_CREATE: ("rs1", "rs2", "rs3"),
            Fmt.NS_DERIVE: ("ers1", "rs1", "rs2", "rs3"),
            Fmt.NS_REVOKE: ("ers1",),
        }.get(FORMAT[self.op], ())
        return len(names)


MASK64 = (1 << 64) - 1


def sext(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def to_signed(value: int) -> int:
    return sext(value, 64)


def alu(op: Op, a: int, b: int) -> int:
    """Integer ALU shared by both interpreters; operands and result are unsigned 64-bit."""
    if op is Op.ADD or op is Op.ADDI:
        return (a + b) & MASK64
    if op is Op.SUB:
        return (a - b) & MASK64
    if op is Op.AND or op is Op.ANDI:
        return a & b & MASK64
    if op is Op.OR or op is Op.ORI:
        return (a | b) & MASK64
    if op is Op.XOR or op is Op.XORI:
        return (a ^ b) & MASK64
    if op is Op.SLL or op is Op.SLLI:
        return (a << (b & 63)) & MASK64
    if op is Op.SRL or op is Op.SRLI:
        return a >> (b & 63)
    if op is Op.SRA or op is Op.SRAI:
        return (to_signed(a) >> (b & 63)) & MASK64
    if op is Op.SLT or op is Op.SLTI:
        return int(to_signed(a) < to_signed(b))
    if op is Op.SLTU or op is Op.SLTIU:
        return int(a < (b & MASK64))
    raise ValueError(f"{op.name} is not an ALU operation")


def branch_taken(op: Op, a: int, b: int) -> bool:
    if op is Op.BEQ:
        return a == b
    if op is Op.BNE:
        return a != b
    if op is Op.BLT:
        return to_signed(a) < to_signed(b)
    if op is Op.BGE:
        return to_signed(a) >= to_signed(b)
    if op is Op.BLTU:
        return a < b
    if op is Op.BGEU:
        return a >= b
    raise ValueError(f"{op.name} is not a branch")
