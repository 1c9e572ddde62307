"""Assembler front end: text <-> :class:`Program`.

Grammar (one statement per line, ``#`` starts a comment)::

    label:                      # attaches to the next instruction (or data byte in .data)
    addi x1, x1, -1             # mnemonic operands...
    eld  x5, 8(x6), e3          # extended load: data from namespace held in e3
    ns.create e1, x2, x3, x4    # e1 <- new namespace [x2, x3] with flag bits x4
    .data 0x100                 # switch to data, placing at private offset 0x100
    .dword 1, 2, 3              # also .word / .half / .byte / .zero N / .align N
    .text                       # back to instructions
    .reserve 65536              # size of the node-private region in bytes
    .entry main                 # first instruction to execute

Branch and jump operands are labels. Labels spelled ``.L<n>`` are local:
they resolve like any other but are left out of ``Program.labels`` (the
formatter invents them for unlabelled targets). Integer registers may be written
``x0``-``x31`` or by ABI name; extended registers are ``e0``-``e31``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .isa import FORMAT, MNEMONIC, Fmt, Instruction, Op

ABI_NAMES = ("zero ra sp gp tp t0 t1 t2 s0 s1 a0 a1 a2 a3 a4 a5 a6 a7 "
             "s2 s3 s4 s5 s6 s7 s8 s9 s10 s11 t3 t4 t5 t6").split()
XREG = {f"x{i}": i for i in range(32)} | {name: i for i, name in enumerate(ABI_NAMES)} | {"fp": 8}
EREG = {f"e{i}": i for i in range(32)}

DEFAULT_PRIVATE_BYTES = 1 << 16

_LABEL_RE = re.compile(r"^[A-Za-z_.$][\w.$]*$")
_LOCAL_RE = re.compile(r"^\.L\d+$")
_MEM_RE = re.compile(r"^(.*)\((\s*[\w$]+\s*)\)$")

_BY_MNEMONIC: dict[str, list[Op]] = {}
for _op, _m in MNEMONIC.items():
    _BY_MNEMONIC.setdefault(_m, []).append(_op)

ALIASES = {"nop", "j", "mv", "ret"}

_IMM_RANGE = {
    Fmt.I: (-2048, 2047),
    Fmt.JALR: (-2048, 2047),
    Fmt.LOAD: (-2048, 2047),
    Fmt.STORE: (-2048, 2047),
    Fmt.ELOAD: (-2048, 2047),
    Fmt.ESTORE: (-2048, 2047),
    Fmt.CLOAD: (-2048, 2047),
    Fmt.CSTORE: (-2048, 2047),
    Fmt.ECLOAD: (-2048, 2047),
    Fmt.ECSTORE: (-2048, 2047),
    Fmt.SHIFT: (0, 63),
    Fmt.U: (-(1 << 19), (1 << 20) - 1),
    Fmt.LI: (-(1 << 63), (1 << 64) - 1),
    Fmt.IMM: (0, (1 << 32) - 1),
}


class ParseError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...] = ()
    labels: dict[str, int] = field(default_factory=dict)
    entry: int = 0
    data_segments: tuple[tuple[int, bytes], ...] = ()
    data_labels: dict[str, int] = field(default_factory=dict)
    private_bytes: int = DEFAULT_PRIVATE_BYTES

    def __len__(self) -> int:
        return len(self.instructions)

    @property
    def data_extent(self) -> int:
        return max((off + len(b) for off, b in self.data_segments), default=0)


def _merge_segments(writes: Iterable[tuple[int, bytes]]) -> tuple[tuple[int, bytes], ...]:
    """Apply writes in order (later wins) and coalesce into disjoint, sorted segments."""
    image: dict[int, int] = {}
    for off, data in writes:
        for i, b in enumerate(data):
            image[off + i] = b
    out: list[tuple[int, bytearray]] = []
    for addr in sorted(image):
        if out and out[-1][0] + len(out[-1][1]) == addr:
            out[-1][1].append(image[addr])
        else:
            out.append((addr, bytearray([image[addr]])))
    return tuple((off, bytes(b)) for off, b in out)


def _parse_int(tok: str, line: int) -> int:
    tok = tok.strip()
    try:
        return int(tok.replace("_", ""), 0)
    except ValueError:
        raise ParseError(line, f"bad immediate {tok!r}") from None


def _split_operands(text: str) -> list[str]:
    return [t.strip() for t in text.split(",")] if text.strip() else []


class _Parser:
    def __init__(self, text: str):
        self.lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
        self.instructions: list[Instruction] = []
        self.pending: list[tuple[int, str, list[str], str]] = []  # (line, mnemonic, operands, raw)
        self.labels: dict[str, int] = {}
        self.label_lines: dict[str, int] = {}
        self.data_labels: dict[str, int] = {}
        self.writes: list[tuple[int, bytes]] = []
        self.cursor = 0
        self.in_data = False
        self.private_bytes = DEFAULT_PRIVATE_BYTES
        self.entry_label: Optional[tuple[str, int]] = None

    def run(self) -> Program:
        for lineno, raw in enumerate(self.lines, start=1):
            self._line(lineno, raw)
        instructions = [self._decode(*p) for p in self.pending]
        entry = 0
        if self.entry_label is not None:
            name, lineno = self.entry_label
            if name not in self.labels:
                raise ParseError(lineno, f"unresolved label {name!r}")
            entry = self.labels[name]
        segments = _merge_segments(self.writes)
        extent = max((o + len(b) for o, b in segments), default=0)
        if extent > self.private_bytes:
            raise ParseError(len(self.lines), f"data extends to {extent} beyond .reserve {self.private_bytes}")
        labels = {k: v for k, v in self.labels.items() if not _LOCAL_RE.match(k)}
        return Program(tuple(instructions), labels, entry, segments,
                       dict(self.data_labels), self.private_bytes)

    def _line(self, lineno: int, raw: str) -> None:
        text = raw.split("#", 1)[0].strip()
        while text:
            head, sep, rest = text.partition(":")
            if sep and _LABEL_RE.match(head.strip()) and " " not in head.strip():
                self._label(lineno, head.strip())
                text = rest.strip()
                continue
            break
        if not text:
            return
        parts = text.split(None, 1)
        mnemonic = parts[0].lower()
        operands = _split_operands(parts[1] if len(parts) > 1 else "")
        if mnemonic.startswith("."):
            self._directive(lineno, mnemonic, operands)
            return
        if self.in_data:
            raise ParseError(lineno, f"instruction {mnemonic!r} inside .data")
        self.pending.append((lineno, mnemonic, operands, text))

    def _label(self, lineno: int, name: str) -> None:
        if name in self.labels or name in self.data_labels:
            raise ParseError(lineno, f"duplicate label {name!r}")
        if self.in_data:
            self.data_labels[name] = self.cursor
        else:
            self.labels[name] = len(self.pending)
            self.label_lines[name] = lineno

    def _directive(self, lineno: int, name: str, ops: list[str]) -> None:
        widths = {".byte": 1, ".half": 2, ".word": 4, ".dword": 8}
        if name == ".data":
            self.in_data = True
            if ops:
                self.cursor = _parse_int(ops[0], lineno)
                if self.cursor < 0:
                    raise ParseError(lineno, "negative data offset")
        elif name == ".text":
            self.in_data = False
        elif name in widths:
            if not self.in_data:
                raise ParseError(lineno, f"{name} outside .data")
            width = widths[name]
            for tok in ops:
                value = _parse_int(tok, lineno)
                if not -(1 << (8 * width - 1)) <= value < (1 << (8 * width)):
                    raise ParseError(lineno, f"value {tok} does not fit {name}")
                self.writes.append((self.cursor, (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")))
                self.cursor += width
        elif name == ".zero":
            if not self.in_data or len(ops) != 1:
                raise ParseError(lineno, ".zero takes one size inside .data")
            n = _parse_int(ops[0], lineno)
            if n < 0:
                raise ParseError(lineno, "negative .zero size")
            self.writes.append((self.cursor, bytes(n)))
            self.cursor += n
        elif name == ".align":
            n = _parse_int(ops[0], lineno) if ops else 8
            if n <= 0:
                raise ParseError(lineno, "bad alignment")
            self.cursor = -(-self.cursor // n) * n
        elif name == ".reserve":
            if len(ops) != 1:
                raise ParseError(lineno, ".reserve takes one size")
            self.private_bytes = _parse_int(ops[0], lineno)
            if self.private_bytes <= 0 or self.private_bytes % 4096:
                raise ParseError(lineno, ".reserve must be a positive multiple of 4096")
        elif name == ".entry":
            if len(ops) != 1:
                raise ParseError(lineno, ".entry takes one label")
            self.entry_label = (ops[0], lineno)
        else:
            raise ParseError(lineno, f"unknown directive {name!r}")

    # -- instruction decoding ------------------------------------------------

    def _xreg(self, tok: str, line: int) -> int:
        reg = XREG.get(tok.strip().lower())
        if reg is None:
            raise ParseError(line, f"bad register {tok.strip()!r}")
        return reg

    def _ereg(self, tok: str, line: int) -> int:
        reg = EREG.get(tok.strip().lower())
        if reg is None:
            raise ParseError(line, f"bad extended register {tok.strip()!r}")
        return reg

    def _target(self, tok: str, line: int) -> int:
        name = tok.strip()
        if name not in self.labels:
            raise ParseError(line, f"unresolved label {name!r}")
        idx = self.labels[name]
        if idx >= len(self.pending):
            raise ParseError(line, f"label {name!r} does not precede an instruction")
        return idx

    def _imm(self, tok: str, fmt: Fmt, line: int) -> int:
        tok = tok.strip()
        if fmt is Fmt.LI and tok in self.data_labels:
            return self.data_labels[tok]
        value = _parse_int(tok, line)
        lo, hi = _IMM_RANGE[fmt]
        if not lo <= value <= hi:
            raise ParseError(line, f"immediate {value} out of range [{lo}, {hi}]")
        if fmt is Fmt.LI and value >= 1 << 63:
            value -= 1 << 64
        return value

    def _mem(self, tok: str, fmt: Fmt, line: int) -> tuple[int, int]:
        m = _MEM_RE.match(tok.strip())
        if not m:
            raise ParseError(line, f"expected imm(reg), got {tok.strip()!r}")
        imm = self._imm(m.group(1) or "0", fmt, line)
        return imm, self._xreg(m.group(2), line)

    def _decode(self, line: int, mnemonic: str, ops: list[str], raw: str) -> Instruction:
        if mnemonic in ALIASES:
            mnemonic, ops = self._expand_alias(mnemonic, ops, line)
        candidates = _BY_MNEMONIC.get(mnemonic)
        if not candidates:
            raise ParseError(line, f"unknown mnemonic {mnemonic!r}")
        op = candidates[0]
        if mnemonic == "emov":
            if len(ops) != 2:
                raise ParseError(line, "emov takes two registers")
            kinds = tuple("e" if o.strip().lower() in EREG else "x" for o in ops)
            op = {("e", "e"): Op.EMOV_EE, ("e", "x"): Op.EMOV_EX, ("x", "e"): Op.EMOV_XE}.get(kinds)
            if op is None:
                raise ParseError(line, f"emov needs an extended register operand: {raw!r}")
        fmt = FORMAT[op]
        expected = len(fmt.value.split(",")) if fmt.value else 0
        if len(ops) != expected:
            raise ParseError(line, f"{mnemonic} expects {expected} operands ({fmt.value}), got {len(ops)}")
        f: dict[str, int] = {}
        X, E = self._xreg, self._ereg
        if fmt is Fmt.R:
            f = dict(rd=X(ops[0], line), rs1=X(ops[1], line), rs2=X(ops[2], line))
        elif fmt in (Fmt.I, Fmt.SHIFT):
            f = dict(rd=X(ops[0], line), rs1=X(ops[1], line), imm=self._imm(ops[2], fmt, line))
        elif fmt in (Fmt.U, Fmt.LI):
            f = dict(rd=X(ops[0], line), imm=self._imm(ops[1], fmt, line))
        elif fmt is Fmt.B:
            f = dict(rs1=X(ops[0], line), rs2=X(ops[1], line), imm=self._target(ops[2], line))
        elif fmt is Fmt.JAL:
            f = dict(rd=X(ops[0], line), imm=self._target(ops[1], line))
        elif fmt in (Fmt.JALR, Fmt.LOAD):
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(rd=X(ops[0], line), rs1=rs1, imm=imm)
        elif fmt is Fmt.STORE:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(rs2=X(ops[0], line), rs1=rs1, imm=imm)
        elif fmt is Fmt.ELOAD:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(rd=X(ops[0], line), rs1=rs1, imm=imm, ers1=E(ops[2], line))
        elif fmt is Fmt.ESTORE:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(rs2=X(ops[0], line), rs1=rs1, imm=imm, ers1=E(ops[2], line))
        elif fmt is Fmt.CLOAD:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(erd=E(ops[0], line), rs1=rs1, imm=imm)
        elif fmt is Fmt.CSTORE:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(ers2=E(ops[0], line), rs1=rs1, imm=imm)
        elif fmt is Fmt.ECLOAD:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(erd=E(ops[0], line), rs1=rs1, imm=imm, ers1=E(ops[2], line))
        elif fmt is Fmt.ECSTORE:
            imm, rs1 = self._mem(ops[1], fmt, line)
            f = dict(ers2=E(ops[0], line), rs1=rs1, imm=imm, ers1=E(ops[2], line))
        elif fmt is Fmt.EMOV_EE:
            f = dict(erd=E(ops[0], line), ers1=E(ops[1], line))
        elif fmt is Fmt.EMOV_EX:
            f = dict(erd=E(ops[0], line), rs1=X(ops[1], line))
        elif fmt is Fmt.EMOV_XE:
            f = dict(rd=X(ops[0], line), ers1=E(ops[1], line))
        elif fmt is Fmt.NS_CREATE:
            f = dict(erd=E(ops[0], line), rs1=X(ops[1], line), rs2=X(ops[2], line), rs3=X(ops[3], line))
        elif fmt is Fmt.NS_DERIVE:
            f = dict(erd=E(ops[0], line), ers1=E(ops[1], line), rs1=X(ops[2], line),
                     rs2=X(ops[3], line), rs3=X(ops[4], line))
        elif fmt is Fmt.NS_REVOKE:
            f = dict(rd=X(ops[0], line), ers1=E(ops[1], line))
        elif fmt is Fmt.ERS:
            f = dict(ers1=E(ops[0], line))
        elif fmt is Fmt.IMM:
            f = dict(imm=self._imm(ops[0], fmt, line))
        return Instruction(op, source_line=line, **f)

    @staticmethod
    def _expand_alias(mnemonic: str, ops: list[str], line: int) -> tuple[str, list[str]]:
        if mnemonic == "nop" and not ops:
            return "addi", ["x0", "x0", "0"]
        if mnemonic == "j" and len(ops) == 1:
            return "jal", ["x0", ops[0]]
        if mnemonic == "mv" and len(ops) == 2:
            return "addi", [ops[0], ops[1], "0"]
        if mnemonic == "ret" and not ops:
            return "jalr", ["x0", "0(x1)"]
        raise ParseError(line, f"bad operands for {mnemonic}")


def parse_program(text: str) -> Program:
    """Parse assembly text. Raises :class:`ParseError` on any malformed input."""
    return _Parser(text).run()


def _fmt_operands(ins: Instruction, names: dict[int, str]) -> str:
    fmt = FORMAT[ins.op]
    x = lambda r: f"x{r}"  # noqa: E731
    e = lambda r: f"e{r}"  # noqa: E731
    mem = f"{ins.imm}(x{ins.rs1})"
    table = {
        Fmt.R: (x(ins.rd), x(ins.rs1), x(ins.rs2)),
        Fmt.I: (x(ins.rd), x(ins.rs1), str(ins.imm)),
        Fmt.SHIFT: (x(ins.rd), x(ins.rs1), str(ins.imm)),
        Fmt.U: (x(ins.rd), str(ins.imm)),
        Fmt.LI: (x(ins.rd), str(ins.imm)),
        Fmt.B: (x(ins.rs1), x(ins.rs2), names.get(ins.imm, "")),
        Fmt.JAL: (x(ins.rd), names.get(ins.imm, "")),
        Fmt.JALR: (x(ins.rd), mem),
        Fmt.LOAD: (x(ins.rd), mem),
        Fmt.STORE: (x(ins.rs2), mem),
        Fmt.ELOAD: (x(ins.rd), mem, e(ins.ers1)),
        Fmt.ESTORE: (x(ins.rs2), mem, e(ins.ers1)),
        Fmt.CLOAD: (e(ins.erd), mem),
        Fmt.CSTORE: (e(ins.ers2), mem),
        Fmt.ECLOAD: (e(ins.erd), mem, e(ins.ers1)),
        Fmt.ECSTORE: (e(ins.ers2), mem, e(ins.ers1)),
        Fmt.EMOV_EE: (e(ins.erd), e(ins.ers1)),
        Fmt.EMOV_EX: (e(ins.erd), x(ins.rs1)),
        Fmt.EMOV_XE: (x(ins.rd), e(ins.ers1)),
        Fmt.NS_CREATE: (e(ins.erd), x(ins.rs1), x(ins.rs2), x(ins.rs3)),
        Fmt.NS_DERIVE: (e(ins.erd), e(ins.ers1), x(ins.rs1), x(ins.rs2), x(ins.rs3)),
        Fmt.NS_REVOKE: (x(ins.rd), e(ins.ers1)),
        Fmt.ERS: (e(ins.ers1),),
        Fmt.IMM: (str(ins.imm),),
        Fmt.NONE: (),
    }
    return ", ".join(table[fmt])


def format_program(program: Program) -> str:
    """Canonical text; ``parse_program(format_program(p)) == p``."""
    names: dict[int, str] = {}
    at: dict[int, list[str]] = {}
    for name, idx in sorted(program.labels.items(), key=lambda kv: (kv[1], kv[0])):
        at.setdefault(idx, []).append(name)
        names.setdefault(idx, name)
    # Targets that lost their label (programmatically built) get a synthetic one.
    for ins in program.instructions:
        if ins.is_branch and ins.imm not in names:
            names[ins.imm] = f".L{ins.imm}"
            at.setdefault(ins.imm, []).append(names[ins.imm])
    out: list[str] = []
    if program.private_bytes != DEFAULT_PRIVATE_BYTES:
        out.append(f".reserve {program.private_bytes}")
    if program.data_segments or program.data_labels:
        for name, off in sorted(program.data_labels.items(), key=lambda kv: (kv[1], kv[0])):
            out.append(f".data {off}")
            out.append(f"{name}:")
        for off, data in program.data_segments:
            out.append(f".data {off}")
            n8 = len(data) // 8 * 8
            for i in range(0, n8, 64):
                words = [int.from_bytes(data[j:j + 8], "little") for j in range(i, min(n8, i + 64), 8)]
                out.append(".dword " + ", ".join(hex(w) for w in words))
            if n8 < len(data):
                out.append(".byte " + ", ".join(str(b) for b in data[n8:]))
        out.append(".text")
    if program.entry != 0:
        entry_name = names.get(program.entry)
        if entry_name is None:
            entry_name = names[program.entry] = f".L{program.entry}"
            at.setdefault(program.entry, []).append(entry_name)
        out.append(f".entry {entry_name}")
    n = len(program.instructions)
    for idx in range(n + 1):
        for name in at.get(idx, ()):
            out.append(f"{name}:")
        if idx < n:
            ins = program.instructions[idx]
            ops = _fmt_operands(ins, names)
            out.append(f"    {MNEMONIC[ins.op]} {ops}".rstrip())
    return "\n".join(out) + ("\n" if out else "")
