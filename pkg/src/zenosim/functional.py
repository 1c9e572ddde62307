"""Zero-latency reference interpreter.

Shares only the capability core and the instruction definitions with the
timing model. Memory is flat per namespace hierarchy, there are no caches,
and nodes advance one instruction each in round-robin order. Used as the
oracle for the timing simulator's architectural results.
"""
from __future__ import annotations

from typing import Sequence, Union

from .asm import Program
from .capability import AccessKind, CapabilityError, NamespaceDirectory, Perms, TaggedWord, check_access
from .config import PAGE_BYTES, Mode, SystemConfig
from .isa import FLAG_READ, FLAG_WRITE, INSTR_BYTES, LOAD_WIDTH, STORE_WIDTH, Fmt, Op, alu, branch_taken, sext

M64 = (1 << 64) - 1


class _Stop(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class _Core:
    def __init__(self, nid: int, program: Program):
        self.id = nid
        self.prog = program.instructions
        self.pc = program.entry
        self.x = [0] * 32
        self.ev = [0] * 32
        self.et = [False] * 32
        self.private = bytearray(program.private_bytes)
        for off, blob in program.data_segments:
            self.private[off:off + len(blob)] = blob
        self.ptags: set[int] = set()
        self.state = "running" if self.prog else "halted"
        self.fault = None
        self.fault_pc = None
        self.steps = 0


class FunctionalMachine:
    def __init__(self, config: SystemConfig, programs: Union[Program, Sequence[Program]]):
        n = config.node_count
        if isinstance(programs, Program):
            programs = [programs] * n
        self.n = n
        self.zeno = config.mode is Mode.ZENO
        self.cores = [_Core(i, p) for i, p in enumerate(programs)]
        self.directory = NamespaceDirectory(n)
        # root id -> {byte offset of 8-byte word: (value bytes)} kept as pages for cheap slicing
        self.pages: dict[int, dict[int, bytearray]] = {}
        self.tags: dict[int, set[int]] = {}
        mailbox = self._create(0, 0, config.shared_bytes - 1, FLAG_READ | FLAG_WRITE)
        for c in self.cores:
            c.ev[1], c.et[1] = mailbox.value, True
            c.x[10], c.x[11] = c.id, n

    def _create(self, node: int, lo: int, hi: int, flags: int) -> TaggedWord:
        word = self.directory.create(node, lo, hi, Perms.from_bits(flags & 7))
        self.pages[word.value] = {}
        self.tags[word.value] = set()
        return word

    # -- namespace memory -------------------------------------------------

    def _resolve(self, core: _Core, e: int, off: int, size: int, kind: AccessKind) -> int:
        ns = core.ev[e]
        if self.zeno:
            if not core.et[e]:
                raise _Stop("UntaggedCapability")
            meta = self.directory.get(ns)
            if meta is None:
                raise _Stop("NotFound")
            f = check_access(meta, off, size, kind)
            if f is not None:
                raise _Stop(f.value)
        else:
            meta = self.directory.get(ns)
            if meta is None:
                raise _Stop("NotFound")
        root = meta.root_ns_id
        rmeta = self.directory.lookup(root)
        if not rmeta.min_bound >> 12 <= off >> 12 <= rmeta.max_bound >> 12:
            raise _Stop("UnmappedPage")
        return root

    def _ns_bytes(self, root: int, off: int, size: int) -> bytes:
        page = self.pages[root].get(off // PAGE_BYTES)
        po = off % PAGE_BYTES
        return bytes(size) if page is None else bytes(page[po:po + size])

    def _ns_store(self, root: int, off: int, data: bytes, tag: bool = False) -> None:
        page = self.pages[root].setdefault(off // PAGE_BYTES, bytearray(PAGE_BYTES))
        po = off % PAGE_BYTES
        page[po:po + len(data)] = data
        tags = self.tags[root]
        for w in range(off - off % 8, off + len(data), 8):
            tags.discard(w)
        if tag:
            tags.add(off)

    # -- private memory ---------------------------------------------------

    @staticmethod
    def _pcheck(core: _Core, off: int, size: int) -> None:
        if off % size:
            raise _Stop("Misaligned")
        if off + size > len(core.private):
            raise _Stop("PrivateOutOfBounds")

    @staticmethod
    def _pstore(core: _Core, off: int, data: bytes, tag: bool = False) -> None:
        core.private[off:off + len(data)] = data
        for w in range(off - off % 8, off + len(data), 8):
            core.ptags.discard(w)
        if tag:
            core.ptags.add(off)

    # -- execution --------------------------------------------------------

    def _setx(self, core: _Core, r: int, v: int) -> None:
        if r:
            core.x[r] = v & M64

    def _sete(self, core: _Core, r: int, v: int, t: bool) -> None:
        if r:
            core.ev[r], core.et[r] = v & M64, t

    def _extended(self, core: _Core, e: int) -> bool:
        """True when an extended access goes to a namespace rather than the private region."""
        return self.zeno or e != 0

    def step(self, core: _Core) -> None:
        if not 0 <= core.pc < len(core.prog):
            raise _Stop("PcOutOfRange")
        ins = core.prog[core.pc]
        op, fmt = ins.op, ins.op.fmt
        x = core.x
        nxt = core.pc + 1
        if fmt in (Fmt.R,):
            self._setx(core, ins.rd, alu(op, x[ins.rs1], x[ins.rs2]))
        elif fmt in (Fmt.I, Fmt.SHIFT):
            self._setx(core, ins.rd, alu(op, x[ins.rs1], ins.imm & M64))
        elif op is Op.LI:
            self._setx(core, ins.rd, ins.imm)
        elif op is Op.LUI:
            self._setx(core, ins.rd, sext(ins.imm << 12, 32))
        elif op is Op.AUIPC:
            self._setx(core, ins.rd, core.pc * INSTR_BYTES + sext(ins.imm << 12, 32))
        elif fmt is Fmt.B:
            if branch_taken(op, x[ins.rs1], x[ins.rs2]):
                nxt = ins.imm
        elif op is Op.JAL:
            self._setx(core, ins.rd, nxt * INSTR_BYTES)
            nxt = ins.imm
        elif op is Op.JALR:
            target = (x[ins.rs1] + ins.imm) & M64 & ~1
            self._setx(core, ins.rd, nxt * INSTR_BYTES)
            if target % INSTR_BYTES or target // INSTR_BYTES >= len(core.prog):
                raise _Stop("BadJumpTarget")
            nxt = target // INSTR_BYTES
        elif op in LOAD_WIDTH:
            size, signed = LOAD_WIDTH[op]
            off = (x[ins.rs1] + ins.imm) & M64
            if fmt is Fmt.ELOAD and self._extended(core, ins.ers1):
                if off % size:
                    raise _Stop("Misaligned")
                raw = self._ns_bytes(self._resolve(core, ins.ers1, off, size, AccessKind.READ), off, size)
            else:
                self._pcheck(core, off, size)
                raw = core.private[off:off + size]
            v = int.from_bytes(raw, "little")
            self._setx(core, ins.rd, sext(v, 8 * size) if signed else v)
        elif op in STORE_WIDTH:
            size = STORE_WIDTH[op]
            off = (x[ins.rs1] + ins.imm) & M64
            data = (x[ins.rs2] % (1 << (8 * size))).to_bytes(size, "little")
            if fmt is Fmt.ESTORE and self._extended(core, ins.ers1):
                if off % size:
                    raise _Stop("Misaligned")
                self._ns_store(self._resolve(core, ins.ers1, off, size, AccessKind.WRITE), off, data)
            else:
                self._pcheck(core, off, size)
                self._pstore(core, off, data)
        elif op in (Op.CLD, Op.ECLD):
            off = (x[ins.rs1] + ins.imm) & M64
            if op is Op.ECLD and self._extended(core, ins.ers1):
                if off % 8:
                    raise _Stop("Misaligned")
                root = self._resolve(core, ins.ers1, off, 8, AccessKind.READ)
                v = int.from_bytes(self._ns_bytes(root, off, 8), "little")
                t = off in self.tags[root]
            else:
                self._pcheck(core, off, 8)
                v = int.from_bytes(core.private[off:off + 8], "little")
                t = off in core.ptags
            self._sete(core, ins.erd, v, t)
        elif op in (Op.CSD, Op.ECSD):
            off = (x[ins.rs1] + ins.imm) & M64
            data = core.ev[ins.ers2].to_bytes(8, "little")
            t = core.et[ins.ers2]
            if op is Op.ECSD and self._extended(core, ins.ers1):
                if off % 8:
                    raise _Stop("Misaligned")
                self._ns_store(self._resolve(core, ins.ers1, off, 8, AccessKind.WRITE), off, data, t)
            else:
                self._pcheck(core, off, 8)
                self._pstore(core, off, data, t)
        elif op is Op.EMOV_EE:
            self._sete(core, ins.erd, core.ev[ins.ers1], core.et[ins.ers1])
        elif op is Op.EMOV_EX:
            self._sete(core, ins.erd, x[ins.rs1], False)
        elif op is Op.EMOV_XE:
            self._setx(core, ins.rd, core.ev[ins.ers1])
        elif op is Op.NS_CREATE:
            lo, hi, flags = x[ins.rs1], x[ins.rs2], x[ins.rs3]
            if lo <= hi and (hi >> 12) - (lo >> 12) >= 1 << 16:
                raise _Stop("NamespaceTooLarge")
            w = self._create(core.id, lo, hi, flags)
            self._sete(core, ins.erd, w.value, w.tag)
        elif op is Op.NS_DERIVE:
            parent = TaggedWord(core.ev[ins.ers1], core.et[ins.ers1])
            if self.zeno:
                w = self.directory.derive(parent, x[ins.rs1], x[ins.rs2], Perms.from_bits(x[ins.rs3] & 7), node=core.id)
            else:
                w = parent
            self._sete(core, ins.erd, w.value, w.tag)
        elif op is Op.NS_REVOKE:
            count = self.directory.revoke(TaggedWord(core.ev[ins.ers1], core.et[ins.ers1])) if self.zeno else 0
            self._setx(core, ins.rd, count)
        elif op in (Op.RC_INVAL, Op.RC_FLUSH, Op.STAT_MARK):
            pass
        elif op is Op.BARRIER:
            core.state = "barrier"
        elif op is Op.HALT:
            core.state = "halted"
        else:  # pragma: no cover - every opcode is handled above
            raise _Stop(f"unhandled {op.name}")
        core.pc = nxt
        core.steps += 1

    def run(self, max_steps: int = 10**8) -> "FunctionalMachine":
        cores = self.cores
        total = 0
        while True:
            active = [c for c in cores if c.state == "running"]
            if not active:
                parked = [c for c in cores if c.state == "barrier"]
                if not parked:
                    return self
                for c in parked:
                    c.state = "running"
                continue
            for c in active:
                try:
                    self.step(c)
                except _Stop as stop:
                    c.state, c.fault, c.fault_pc = "faulted", stop.reason, c.pc
                except CapabilityError as err:
                    c.state, c.fault, c.fault_pc = "faulted", err.reason, c.pc
            total += len(active)
            if total > max_steps:
                raise RuntimeError("functional run exceeded its step budget")

    def namespace_image(self) -> dict[int, dict[int, bytes]]:
        out = {}
        for root, pages in self.pages.items():
            out[root] = {vp: bytes(p) for vp, p in sorted(pages.items()) if any(p)}
        return out

    def architectural_state(self) -> dict:
        nodes = []
        for c in self.cores:
            nodes.append({
                "x": list(c.x),
                "e": [(v, t) for v, t in zip(c.ev, c.et)],
                "private": bytes(c.private),
                "private_tags": sorted(c.ptags),
                "status": c.state,
                "fault": c.fault,
                "fault_pc": c.fault_pc,
            })
        return {"nodes": nodes, "namespaces": self.namespace_image()}


def run_functional(config: SystemConfig, programs) -> FunctionalMachine:
    return FunctionalMachine(config, programs).run()
