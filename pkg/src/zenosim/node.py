"""One node: in-order core, caches, NLB (metadata cache + N-TLB), remote-data cache and network interface.

Every instruction costs one CPU cycle. Stalls are charged to exactly one of
three other buckets: ``nlb`` (the parallel metadata-cache/N-TLB probe),
``local`` (L1/L2/DRAM on this node, including directory shards held here) and
``global`` (anything that crosses the mesh, plus barrier waiting). The node's
clock is always the sum of the four buckets.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Optional

from .cache import LRUCache, SetAssocCache, make_lru
from .capability import (MASK64, AccessKind, CapabilityError, NamespaceMetadata, Perms, TaggedWord,
                         check_access, METADATA_WORDS)
from .config import Mode, MissPolicy, PAGE_BYTES
from .interconnect import MisroutedRequest, RemoteRequest, RequestKind, Response
from .isa import (INSTR_BYTES, LOAD_WIDTH, STORE_WIDTH, Instruction, Op, sext, to_signed)
from .memory import PAGE_MASK, PAGE_SHIFT

if TYPE_CHECKING:
    from .system import Machine

READ, WRITE = AccessKind.READ, AccessKind.WRITE
# Remote-cache frames and code live in their own physical ranges so they never alias data lines.
FRAME_BASE = 1 << 40
CODE_BASE = 1 << 44
META_BYTES = METADATA_WORDS * 8


class NodeStatus(enum.Enum):
    RUNNING = "running"
    BARRIER = "barrier"
    HALTED = "halted"
    FAULTED = "faulted"


class SimFault(Exception):
    def __init__(self, reason: str, pc: int, line: int, node: int = -1):
        super().__init__(f"node {node}: {reason} at pc {pc} (line {line})")
        self.reason = reason
        self.pc = pc
        self.line = line
        self.node = node


class _Trap(Exception):
    """Internal: aborts the current instruction with a fault reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class PerfCounters:
    instructions_committed: int = 0
    total_cycles: int = 0
    cpu_cycles: int = 0
    nlb_cycles: int = 0
    local_mem_cycles: int = 0
    global_mem_cycles: int = 0
    ntlb_hits: int = 0
    ntlb_misses: int = 0
    mdc_hits: int = 0
    mdc_misses: int = 0
    l1d_hits: int = 0
    l1d_misses: int = 0
    l1i_hits: int = 0
    l1i_misses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    remote_cache_hits: int = 0
    remote_cache_misses: int = 0
    ni_mdc_hits: int = 0
    ni_mdc_misses: int = 0
    remote_requests: int = 0
    remote_faults: int = 0
    barrier_wait_cycles: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def bucket_identity_holds(self) -> bool:
        return self.total_cycles == (self.cpu_cycles + self.nlb_cycles
                                     + self.local_mem_cycles + self.global_mem_cycles)


COUNTER_FIELDS = tuple(f.name for f in fields(PerfCounters))


class RemoteBlock:
    """A 4 KB page copied from another node into a local DRAM frame."""

    __slots__ = ("frame", "root", "vpage", "data", "tags", "valid", "dirty")

    def __init__(self, frame: int, root: int, vpage: int):
        self.frame = frame
        self.root = root
        self.vpage = vpage
        self.data = bytearray(PAGE_BYTES)
        self.tags: set[int] = set()
        self.valid = 0
        self.dirty: dict[int, int] = {}

    def dirty_mask(self) -> int:
        m = 0
        for v in self.dirty.values():
            m |= v
        return m


# Dispatch classes for the pre-decoded instruction stream.
(K_ALU, K_LI, K_LUI, K_AUIPC, K_BR, K_JAL, K_JALR, K_LOAD, K_STORE, K_ELOAD, K_ESTORE,
 K_CLD, K_CSD, K_ECLD, K_ECSD, K_EMOV_EE, K_EMOV_EX, K_EMOV_XE, K_CREATE, K_DERIVE, K_REVOKE,
 K_INVAL, K_FLUSH, K_BARRIER, K_MARK, K_HALT) = range(26)
# Kinds that may read or write state owned by other nodes (directory, remote or NI-visible memory).
SHARED_KINDS = frozenset((K_ELOAD, K_ESTORE, K_ECLD, K_ECSD, K_CREATE, K_DERIVE, K_REVOKE,
                          K_INVAL, K_FLUSH, K_BARRIER))

_SRA = lambda a, b: (to_signed(a) >> (b & 63)) & MASK64  # noqa: E731
_SLT = lambda a, b: int(to_signed(a) < to_signed(b))  # noqa: E731
ALU_FN = {
    Op.ADD: lambda a, b: (a + b) & MASK64, Op.ADDI: lambda a, b: (a + b) & MASK64,
    Op.SUB: lambda a, b: (a - b) & MASK64,
    Op.AND: lambda a, b: a & b, Op.ANDI: lambda a, b: a & b,
    Op.OR: lambda a, b: a | b, Op.ORI: lambda a, b: a | b,
    Op.XOR: lambda a, b: a ^ b, Op.XORI: lambda a, b: a ^ b,
    Op.SLL: lambda a, b: (a << (b & 63)) & MASK64, Op.SLLI: lambda a, b: (a << (b & 63)) & MASK64,
    Op.SRL: lambda a, b: a >> (b & 63), Op.SRLI: lambda a, b: a >> (b & 63),
    Op.SRA: _SRA, Op.SRAI: _SRA,
    Op.SLT: _SLT, Op.SLTI: _SLT,
    Op.SLTU: lambda a, b: int(a < b), Op.SLTIU: lambda a, b: int(a < b),
}
_R_OPS = {Op.ADD, Op.SUB, Op.AND, Op.OR, Op.XOR, Op.SLL, Op.SRL, Op.SRA, Op.SLT, Op.SLTU}
BRANCH_FN = {
    Op.BEQ: lambda a, b: a == b,
    Op.BNE: lambda a, b: a != b,
    Op.BLT: lambda a, b: to_signed(a) < to_signed(b),
    Op.BGE: lambda a, b: to_signed(a) >= to_signed(b),
    Op.BLTU: lambda a, b: a < b,
    Op.BGEU: lambda a, b: a >= b,
}
_KIND = {
    Op.LI: K_LI, Op.LUI: K_LUI, Op.AUIPC: K_AUIPC, Op.JAL: K_JAL, Op.JALR: K_JALR,
    Op.CLD: K_CLD, Op.CSD: K_CSD, Op.ECLD: K_ECLD, Op.ECSD: K_ECSD,
    Op.EMOV_EE: K_EMOV_EE, Op.EMOV_EX: K_EMOV_EX, Op.EMOV_XE: K_EMOV_XE,
    Op.NS_CREATE: K_CREATE, Op.NS_DERIVE: K_DERIVE, Op.NS_REVOKE: K_REVOKE,
    Op.RC_INVAL: K_INVAL, Op.RC_FLUSH: K_FLUSH, Op.BARRIER: K_BARRIER,
    Op.STAT_MARK: K_MARK, Op.HALT: K_HALT,
}


def u32_imm20(imm: int) -> int:
    return sext((imm << 12) & 0xFFFFFFFF, 32) & MASK64


def decode_for_exec(ins: Instruction) -> tuple:
    """Flatten an Instruction into (kind, a, b, c, d, imm, fn, size, signed) for the hot loop."""
    op = ins.op
    if op in ALU_FN:
        b_is_reg = op in _R_OPS
        return (K_ALU, ins.rd, ins.rs1, ins.rs2 if b_is_reg else -1, 0,
                ins.imm & MASK64, ALU_FN[op], 0, False)
    if op in BRANCH_FN:
        return (K_BR, 0, ins.rs1, ins.rs2, 0, ins.imm, BRANCH_FN[op], 0, False)
    if op in LOAD_WIDTH:
        size, signed = LOAD_WIDTH[op]
        kind = K_ELOAD if op.name.startswith("E") else K_LOAD
        return (kind, ins.rd, ins.rs1, ins.ers1, 0, ins.imm, None, size, signed)
    if op in STORE_WIDTH:
        kind = K_ESTORE if op.name.startswith("E") else K_STORE
        return (kind, ins.rs2, ins.rs1, ins.ers1, 0, ins.imm, None, STORE_WIDTH[op], False)
    kind = _KIND[op]
    if kind in (K_CLD, K_ECLD):
        return (kind, ins.erd, ins.rs1, ins.ers1, 0, ins.imm, None, 8, False)
    if kind in (K_CSD, K_ECSD):
        return (kind, ins.ers2, ins.rs1, ins.ers1, 0, ins.imm, None, 8, False)
    if kind == K_DERIVE:
        return (kind, ins.erd, ins.ers1, ins.rs1, (ins.rs2, ins.rs3), 0, None, 0, False)
    if kind == K_CREATE:
        return (kind, ins.erd, ins.rs1, ins.rs2, ins.rs3, 0, None, 0, False)
    if kind == K_EMOV_EE:
        return (kind, ins.erd, ins.ers1, 0, 0, 0, None, 0, False)
    if kind == K_EMOV_EX:
        return (kind, ins.erd, ins.rs1, 0, 0, 0, None, 0, False)
    if kind in (K_EMOV_XE, K_REVOKE):
        return (kind, ins.rd, ins.ers1, 0, 0, 0, None, 0, False)
    if kind == K_INVAL:
        return (kind, 0, ins.ers1, 0, 0, 0, None, 0, False)
    return (kind, ins.rd, ins.rs1, 0, 0, ins.imm, None, 0, False)


def perms_from_flags(flags: int) -> Perms:
    return Perms.from_bits(flags & 7)


class Node:
    def __init__(self, node_id: int, machine: "Machine", program, trace: Optional[list] = None):
        cfg = machine.config
        self.id = node_id
        self.machine = machine
        self.cfg = cfg
        self.lat = cfg.latency
        self.zeno = cfg.mode is Mode.ZENO
        self.fault_on_miss = cfg.mdc_miss_policy is MissPolicy.FAULT
        self.program = program
        self.code = [decode_for_exec(i) for i in program.instructions]
        self.lines = [i.source_line for i in program.instructions]
        self._shared = [ins[0] in SHARED_KINDS for ins in self.code]
        self.memory = machine.memories[node_id]
        self._private_len = len(self.memory.private)
        self.x = [0] * 32
        self.ev = [0] * 32
        self.et = [False] * 32
        self.pc = program.entry
        self.status = NodeStatus.RUNNING if self.code else NodeStatus.HALTED
        self.fault: Optional[SimFault] = None
        self.trace = trace

        self.cpu = self.nlb = self.local = self.glob = 0
        self.instret = 0
        self.time = 0
        self.barrier_wait = 0
        self.remote_cache_hits = self.remote_cache_misses = 0
        self.remote_requests = self.remote_faults = 0
        self.marks: list[tuple[int, dict]] = []

        line = cfg.line_bytes
        self.l1i = SetAssocCache(cfg.l1_kb * 1024, cfg.l1_ways, line)
        self.l1d = SetAssocCache(cfg.l1_kb * 1024, cfg.l1_ways, line)
        self.l2 = SetAssocCache(cfg.l2_kb * 1024, cfg.l2_ways, line)
        self.mdc = make_lru(cfg.mdc_entries, cfg.mdc_ways)
        self.ntlb = make_lru(cfg.ntlb_entries, cfg.ntlb_ways)
        # The network interface has its own metadata cache; it shares nothing timing-relevant with the core.
        self.ni_mdc = make_lru(cfg.mdc_entries, cfg.mdc_ways)
        self.rcache = LRUCache(cfg.remote_cache_blocks)
        self._free_frames = list(range(cfg.remote_cache_blocks - 1, -1, -1))
        self._iline = -1
        self._line_shift = line.bit_length() - 1

    # ------------------------------------------------------------------ counters

    def counters(self) -> PerfCounters:
        return PerfCounters(
            instructions_committed=self.instret,
            total_cycles=self.cpu + self.nlb + self.local + self.glob,
            cpu_cycles=self.cpu, nlb_cycles=self.nlb,
            local_mem_cycles=self.local, global_mem_cycles=self.glob,
            ntlb_hits=self.ntlb.hits, ntlb_misses=self.ntlb.misses,
            mdc_hits=self.mdc.hits, mdc_misses=self.mdc.misses,
            l1d_hits=self.l1d.hits, l1d_misses=self.l1d.misses,
            l1i_hits=self.l1i.hits, l1i_misses=self.l1i.misses,
            l2_hits=self.l2.hits, l2_misses=self.l2.misses,
            remote_cache_hits=self.remote_cache_hits, remote_cache_misses=self.remote_cache_misses,
            ni_mdc_hits=self.ni_mdc.hits, ni_mdc_misses=self.ni_mdc.misses,
            remote_requests=self.remote_requests, remote_faults=self.remote_faults,
            barrier_wait_cycles=self.barrier_wait,
        )

    def _sync_time(self) -> None:
        self.time = self.cpu + self.nlb + self.local + self.glob

    def wait_until(self, t: int) -> None:
        """Stall (charged to global memory) until cycle ``t``; used by barriers."""
        if t > self.time:
            self.glob += t - self.time
            self.barrier_wait += t - self.time
            self.time = t

    # ------------------------------------------------------------------ local hierarchy

    def _dcache(self, paddr: int) -> int:
        lat = self.lat
        if self.l1d.access(paddr):
            return lat.l1_hit
        if self.l2.access(paddr):
            return lat.l1_hit + lat.l2_hit
        return lat.l1_hit + lat.l2_hit + lat.dram_access

    def _ifetch(self, pc: int) -> None:
        addr = CODE_BASE + pc * INSTR_BYTES
        line = addr >> self._line_shift
        if line == self._iline:
            return
        self._iline = line
        if self.l1i.access(addr):
            return
        stall = self.lat.l2_hit
        if not self.l2.access(addr):
            stall += self.lat.dram_access
        self.local += stall

    # ------------------------------------------------------------------ directory traffic

    def _send(self, req: RemoteRequest) -> Response:
        self.remote_requests += 1
        resp = self.machine.network.send(req)
        if not resp.ok:
            self.remote_faults += 1
        return resp

    def _directory_words(self, shard: int, words: int, write: bool, ns_id: int = 0) -> None:
        """Charge ``words`` metadata-word accesses to ``shard``'s directory storage."""
        if words <= 0:
            return
        if shard == self.id:
            self.local += words * self.lat.dram_access
            return
        kind = RequestKind.DIRECTORY_WRITE if write else RequestKind.DIRECTORY_READ
        resp = self._send(RemoteRequest(kind, self.id, shard, ns_id=ns_id, size=words, payload=bytes(8 * words) if write else b""))
        self.glob += resp.latency

    def _meta(self, ns_id: int) -> NamespaceMetadata:
        meta = self.mdc.lookup(ns_id)
        if meta is not None:
            return meta
        if self.fault_on_miss:
            raise _Trap("ConfiguredFaultOnMiss")
        directory = self.machine.directory
        shard = directory.home_node(ns_id)
        if shard == self.id:
            self.local += self.lat.dram_access
            meta = directory.get(ns_id)
        else:
            resp = self._send(RemoteRequest(RequestKind.DIRECTORY_READ, self.id, shard, ns_id=ns_id,
                                            size=METADATA_WORDS))
            self.glob += resp.latency
            if not resp.ok:
                raise _Trap(resp.fault or "NotFound")
            meta = resp.data
        if meta is None:
            raise _Trap("NotFound")
        self.mdc.insert(ns_id, meta)
        return meta

    def _walk(self, root: int, pt_ppn: int, vpage: int) -> tuple[int, int]:
        # The walk is memory traffic: its step cost lands in the bucket of the table it reads.
        home = self.machine.directory.home_node(root)
        if home == self.id:
            self.local += self.lat.walker_step + self.lat.dram_access
        else:
            resp = self._send(RemoteRequest(RequestKind.DIRECTORY_READ, self.id, home, ns_id=root,
                                            offset=vpage, size=1, ppn=pt_ppn))
            self.glob += self.lat.walker_step + resp.latency
        loc = self.machine.tables.walk(home, pt_ppn, vpage)
        if loc is None:
            raise _Trap("UnmappedPage")
        return loc

    # ------------------------------------------------------------------ NLB and translation

    def nlb_lookup(self, ns_id: int, tagged: bool, offset: int, size: int, kind: AccessKind):
        """Metadata + translation for one namespace access. Returns (meta, (node, ppn))."""
        if self.zeno:
            if not tagged:
                raise _Trap("UntaggedCapability")
            self.nlb += self.lat.nlb_lookup
            meta = self._meta(ns_id)
            f = check_access(meta, offset, size, kind)
            if f is not None:
                raise _Trap(f.value)
            if self.trace is not None:
                self.trace.append(("allow", self.id, ns_id, offset, size, kind.value))
        else:
            self.nlb += self.lat.nlb_lookup
            meta = self.machine.directory.get(ns_id)
            if meta is None:
                raise _Trap("NotFound")
            if offset + size - 1 > MASK64:
                raise _Trap("OutOfBounds")
        vpage = offset >> PAGE_SHIFT
        key = (meta.root_ns_id, vpage)
        loc = self.ntlb.lookup(key)
        if loc is None:
            loc = self._walk(meta.root_ns_id, meta.page_table_ppn, vpage)
            self.ntlb.insert(key, loc)
        return meta, loc

    # ------------------------------------------------------------------ remote-data cache

    def _frame_addr(self, blk: RemoteBlock, off: int) -> int:
        return FRAME_BASE + blk.frame * PAGE_BYTES + off

    def _drop_frame_lines(self, blk: RemoteBlock) -> None:
        base = FRAME_BASE + blk.frame * PAGE_BYTES
        self.l1d.invalidate_range(base, PAGE_BYTES)
        self.l2.invalidate_range(base, PAGE_BYTES)

    def _block(self, key: tuple[int, int], root: int, vpage: int) -> RemoteBlock:
        blk = self.rcache.lookup(key)
        if blk is not None:
            return blk
        if self._free_frames:
            frame = self._free_frames.pop()
        else:
            victim_key, victim = next(iter(self.rcache.items()))
            self._writeback(victim_key, victim)
            self.rcache.invalidate(victim_key)
            self._drop_frame_lines(victim)
            frame = victim.frame
        blk = RemoteBlock(frame, root, vpage)
        self.rcache.insert(key, blk)
        return blk

    def _fetch(self, key, blk: RemoteBlock, ns_id: int, meta: NamespaceMetadata) -> None:
        home, ppn = key
        page_lo = blk.vpage << PAGE_SHIFT
        lo = max(page_lo, meta.min_bound)
        hi = min(page_lo + PAGE_MASK, meta.max_bound)
        req = RemoteRequest(RequestKind.READ_BLOCK, self.id, home, ns_id=ns_id, offset=lo,
                            size=hi - lo + 1, ppn=ppn)
        resp = self._send(req)
        self.glob += resp.latency
        if not resp.ok:
            raise _Trap(resp.fault or "RemoteFault")
        blo, bhi = lo - page_lo, hi - page_lo
        rng = ((1 << (bhi - blo + 1)) - 1) << blo
        dirty = blk.dirty_mask()
        data = blk.data
        if not dirty & rng:
            data[blo:bhi + 1] = resp.data
        else:
            payload = resp.data
            for i in range(blo, bhi + 1):
                if not (dirty >> i) & 1:
                    data[i] = payload[i - blo]
        for w in range(blo & ~7, bhi + 1, 8):
            if (dirty >> w) & 0xFF:
                continue
            if w in resp.tags:
                blk.tags.add(w)
            else:
                blk.tags.discard(w)
        blk.valid |= rng
        self._drop_frame_lines(blk)

    def _writeback(self, key, blk: RemoteBlock) -> None:
        if not blk.dirty:
            return
        home, ppn = key
        page_lo = blk.vpage << PAGE_SHIFT
        for ns_id, mask in sorted(blk.dirty.items()):
            lo = (mask & -mask).bit_length() - 1
            hi = mask.bit_length() - 1
            tags = frozenset(w for w in blk.tags if lo <= w <= hi)
            req = RemoteRequest(RequestKind.WRITE_BLOCK, self.id, home, ns_id=ns_id, offset=page_lo + lo,
                                size=hi - lo + 1, payload=bytes(blk.data[lo:hi + 1]), mask=mask >> lo,
                                tags=tags, ppn=ppn)
            resp = self._send(req)
            self.glob += resp.latency
            if not resp.ok:
                blk.dirty.clear()
                raise _Trap(resp.fault or "RemoteFault")
        blk.dirty.clear()

    def remote_cache_invalidate(self, root: Optional[int] = None) -> int:
        """Write back and drop blocks of one hierarchy (``root``) or all blocks; returns blocks dropped."""
        dropped = 0
        for key, blk in self.rcache.items():
            if root is not None and blk.root != root:
                continue
            self._writeback(key, blk)
            self.rcache.invalidate(key)
            self._drop_frame_lines(blk)
            self._free_frames.append(blk.frame)
            dropped += 1
        return dropped

    def remote_cache_flush(self) -> int:
        n = 0
        for key, blk in self.rcache.items():
            if blk.dirty:
                self._writeback(key, blk)
                n += 1
        return n

    # ------------------------------------------------------------------ data access paths

    def _ns_read(self, ns_id: int, tagged: bool, off: int, size: int, want_tag: bool = False):
        if off % size:
            raise _Trap("Misaligned")
        meta, (home, ppn) = self.nlb_lookup(ns_id, tagged, off, size, READ)
        po = off & PAGE_MASK
        if home == self.id:
            self.local += self._dcache(ppn * PAGE_BYTES + po)
            mem = self.memory
            raw = mem.read(ppn, po, size)
            tag = want_tag and mem.read_tag(ppn, po)
        else:
            key = (home, ppn)
            blk = self._block(key, meta.root_ns_id, off >> PAGE_SHIFT)
            need = ((1 << size) - 1) << po
            if blk.valid & need == need:
                self.remote_cache_hits += 1
            else:
                self.remote_cache_misses += 1
                self._fetch(key, blk, ns_id, meta)
            self.local += self._dcache(self._frame_addr(blk, po))
            raw = bytes(blk.data[po:po + size])
            tag = want_tag and po in blk.tags
        if self.trace is not None:
            self.trace.append(("touch", self.id, ns_id, off, size, "Read"))
        return raw, tag

    def _ns_write(self, ns_id: int, tagged: bool, off: int, data: bytes, tag: Optional[bool] = None) -> None:
        size = len(data)
        if off % size:
            raise _Trap("Misaligned")
        meta, (home, ppn) = self.nlb_lookup(ns_id, tagged, off, size, WRITE)
        po = off & PAGE_MASK
        if self.trace is not None:
            self.trace.append(("touch", self.id, ns_id, off, size, "Write"))
        if home == self.id:
            self.local += self._dcache(ppn * PAGE_BYTES + po)
            if tag is None:
                self.memory.write(ppn, po, data)
            else:
                self.memory.write_tagged(ppn, po, int.from_bytes(data, "little"), tag)
            return
        key = (home, ppn)
        existed = self.rcache.peek(key) is not None
        blk = self._block(key, meta.root_ns_id, off >> PAGE_SHIFT)
        if existed:
            self.remote_cache_hits += 1
        else:
            self.remote_cache_misses += 1
        self.local += self._dcache(self._frame_addr(blk, po))
        blk.data[po:po + size] = data
        m = ((1 << size) - 1) << po
        blk.valid |= m
        blk.dirty[ns_id] = blk.dirty.get(ns_id, 0) | m
        if tag:
            blk.tags.add(po)
        else:
            for w in range(po & ~7, po + size, 8):
                blk.tags.discard(w)

    def _private_check(self, off: int, size: int) -> None:
        if off % size:
            raise _Trap("Misaligned")
        if off + size > len(self.memory.private):
            raise _Trap("PrivateOutOfBounds")

    # ------------------------------------------------------------------ network interface (server side)

    def serve(self, req: RemoteRequest) -> Response:
        kind = req.kind
        lat = self.lat
        machine = self.machine
        directory = machine.directory
        if kind is RequestKind.DIRECTORY_READ:
            ns_id = req.ns_id
            if directory.home_node(ns_id) != self.id:
                raise MisroutedRequest(f"namespace {ns_id:#x} is not homed on node {self.id}")
            if req.ppn >= 0:
                # Page-table entry read: ns_id names the hierarchy root, offset the virtual page.
                return Response(True, data=machine.tables.walk(self.id, req.ppn, req.offset),
                                service=lat.dram_access, payload_bytes=8)
            meta = directory.get(ns_id)
            if meta is None:
                return Response(False, fault="NotFound", service=lat.dram_access, payload_bytes=8)
            return Response(True, data=meta, service=lat.dram_access, payload_bytes=META_BYTES)
        if kind is RequestKind.DIRECTORY_WRITE:
            if req.ns_id and directory.home_node(req.ns_id) != self.id:
                raise MisroutedRequest(f"namespace {req.ns_id:#x} is not homed on node {self.id}")
            return Response(True, service=req.size * lat.dram_access, payload_bytes=len(req.payload))
        if kind is RequestKind.INVALIDATE:
            for ns_id in req.tags:
                self.mdc.invalidate(ns_id)
                self.ni_mdc.invalidate(ns_id)
            return Response(True, payload_bytes=8 * max(1, len(req.tags)))
        # Data requests: same permission check as the core's MMU, before any memory is touched.
        access = READ if kind is RequestKind.READ_BLOCK else WRITE
        service = 0
        if self.zeno:
            service += lat.nlb_lookup
            meta = self.ni_mdc.lookup(req.ns_id)
            if meta is None:
                shard = directory.home_node(req.ns_id)
                if shard == self.id:
                    service += lat.dram_access
                    meta = directory.get(req.ns_id)
                else:
                    resp = self._send(RemoteRequest(RequestKind.DIRECTORY_READ, self.id, shard,
                                                    ns_id=req.ns_id, size=METADATA_WORDS))
                    service += resp.latency
                    meta = resp.data if resp.ok else None
                if meta is None:
                    return Response(False, fault="NotFound", service=service)
                self.ni_mdc.insert(req.ns_id, meta)
            f = check_access(meta, req.offset, req.size, access)
            if f is not None:
                return Response(False, fault=f.value, service=service)
            if self.trace is not None:
                self.trace.append(("allow", self.id, req.ns_id, req.offset, req.size, access.value))
        else:
            meta = directory.get(req.ns_id)
            if meta is None:
                return Response(False, fault="NotFound", service=service)
        home = directory.home_node(meta.root_ns_id)
        loc = machine.tables.walk(home, meta.page_table_ppn, req.offset >> PAGE_SHIFT)
        if loc != (self.id, req.ppn) or (req.offset & PAGE_MASK) + req.size > PAGE_BYTES:
            return Response(False, fault="BadTranslation", service=service)
        service += lat.dram_access
        po = req.offset & PAGE_MASK
        if self.trace is not None:
            self.trace.append(("touch", self.id, req.ns_id, req.offset, req.size, access.value))
        mem = self.memory
        if access is READ:
            tags = frozenset(t for t in mem.tags_in(req.ppn, po, po + req.size - 1))
            return Response(True, data=mem.read(req.ppn, po, req.size), tags=tags,
                            service=service, payload_bytes=req.size)
        mem.write_masked(req.ppn, po, req.payload, req.mask, req.tags)
        return Response(True, service=service, payload_bytes=req.size)

    # ------------------------------------------------------------------ namespace instructions

    def _ns_create(self, lo: int, hi: int, flags: int) -> TaggedWord:
        machine = self.machine
        word = machine.create_namespace(self.id, lo, hi, flags)
        if self.zeno:
            self._directory_words(machine.directory.home_node(word.value), METADATA_WORDS, True, word.value)
        return word

    def _ns_derive(self, parent: TaggedWord, lo: int, hi: int, flags: int) -> TaggedWord:
        if not self.zeno:
            return parent
        directory = self.machine.directory
        word = directory.derive(parent, lo, hi, perms_from_flags(flags), node=self.id)
        self._directory_words(directory.home_node(word.value), METADATA_WORDS, True, word.value)
        self._directory_words(directory.home_node(parent.value), 1, True, parent.value)
        return word

    def _ns_revoke(self, target: TaggedWord) -> int:
        if not self.zeno:
            return 0
        machine = self.machine
        directory = machine.directory
        revoked = directory.revoke_ids(target)
        visited = directory.subtree(target.value)
        per_shard: dict[int, list[int]] = {}
        for ns_id in visited:
            per_shard.setdefault(directory.home_node(ns_id), []).append(ns_id)
        for shard in sorted(per_shard):
            # One read of the entry (valid bit and child links) plus one write of the valid bit.
            ids = per_shard[shard]
            self._directory_words(shard, 2 * len(ids), True, ids[0])
        doomed = frozenset(revoked)
        for ns_id in doomed:
            self.mdc.invalidate(ns_id)
            self.ni_mdc.invalidate(ns_id)
        worst = 0
        for other in range(machine.node_count):
            if other == self.id:
                continue
            resp = self._send(RemoteRequest(RequestKind.INVALIDATE, self.id, other, tags=doomed))
            worst = max(worst, resp.latency)
        self.glob += worst
        return len(revoked)

    # ------------------------------------------------------------------ execution

    def step(self) -> NodeStatus:
        """Execute one instruction. Returns the node status afterwards."""
        pc = self.pc
        try:
            ins = self.code[pc]
        except IndexError:
            return self._fault("PcOutOfRange", pc)
        if (CODE_BASE + pc * INSTR_BYTES) >> self._line_shift != self._iline:
            self._ifetch(pc)
        self.cpu += 1
        kind, a, b, c, d, imm, fn, size, signed = ins
        x = self.x
        npc = pc + 1
        try:
            if kind == K_ALU:
                if a:
                    x[a] = fn(x[b], x[c] if c >= 0 else imm)
            elif kind == K_LOAD:
                off = (x[b] + imm) & MASK64
                if off % size or off + size > self._private_len:
                    self._private_check(off, size)
                self.local += self._dcache(off)
                if a:
                    v = int.from_bytes(self.memory.private[off:off + size], "little")
                    x[a] = sext(v, size * 8) & MASK64 if signed else v
            elif kind == K_BR:
                if fn(x[b], x[c]):
                    npc = imm
            elif kind == K_ELOAD:
                off = (x[b] + imm) & MASK64
                if c == 0 and not self.zeno:
                    self._private_check(off, size)
                    self.local += self._dcache(off)
                    raw = self.memory.private[off:off + size]
                else:
                    raw, _ = self._ns_read(self.ev[c], self.et[c], off, size)
                if a:
                    v = int.from_bytes(raw, "little")
                    x[a] = sext(v, size * 8) & MASK64 if signed else v
            elif kind == K_ESTORE:
                off = (x[b] + imm) & MASK64
                data = (x[a] & ((1 << (8 * size)) - 1)).to_bytes(size, "little")
                if c == 0 and not self.zeno:
                    self._private_check(off, size)
                    self.local += self._dcache(off)
                    self.memory.private_write(off, data)
                else:
                    self._ns_write(self.ev[c], self.et[c], off, data)
            elif kind == K_STORE:
                off = (x[b] + imm) & MASK64
                if off % size or off + size > self._private_len:
                    self._private_check(off, size)
                self.local += self._dcache(off)
                self.memory.private_write(off, (x[a] & ((1 << (8 * size)) - 1)).to_bytes(size, "little"))
            elif kind == K_LI:
                if a:
                    x[a] = imm & MASK64
            elif kind == K_JAL:
                if a:
                    x[a] = npc * INSTR_BYTES
                npc = imm
            elif kind == K_JALR:
                target = ((x[b] + imm) & MASK64) & ~1
                if a:
                    x[a] = npc * INSTR_BYTES
                if target % INSTR_BYTES or target // INSTR_BYTES >= len(self.code):
                    raise _Trap("BadJumpTarget")
                npc = target // INSTR_BYTES
            elif kind == K_LUI:
                if a:
                    x[a] = u32_imm20(imm)
            elif kind == K_AUIPC:
                if a:
                    x[a] = (pc * INSTR_BYTES + u32_imm20(imm)) & MASK64
            elif kind == K_CLD or (kind == K_ECLD and c == 0 and not self.zeno):
                off = (x[b] + imm) & MASK64
                self._private_check(off, 8)
                self.local += self._dcache(off)
                mem = self.memory
                self._set_e(a, int.from_bytes(mem.private[off:off + 8], "little"), off in mem.private_tags)
            elif kind == K_CSD or (kind == K_ECSD and c == 0 and not self.zeno):
                off = (x[b] + imm) & MASK64
                self._private_check(off, 8)
                self.local += self._dcache(off)
                mem = self.memory
                mem.private[off:off + 8] = self.ev[a].to_bytes(8, "little")
                if self.et[a]:
                    mem.private_tags.add(off)
                else:
                    mem.private_tags.discard(off)
            elif kind == K_ECLD:
                off = (x[b] + imm) & MASK64
                raw, tag = self._ns_read(self.ev[c], self.et[c], off, 8, want_tag=True)
                self._set_e(a, int.from_bytes(raw, "little"), tag)
            elif kind == K_ECSD:
                off = (x[b] + imm) & MASK64
                self._ns_write(self.ev[c], self.et[c], off, self.ev[a].to_bytes(8, "little"), tag=self.et[a])
            elif kind == K_EMOV_EE:
                self._set_e(a, self.ev[b], self.et[b])
            elif kind == K_EMOV_EX:
                self._set_e(a, x[b], False)
            elif kind == K_EMOV_XE:
                if a:
                    x[a] = self.ev[b]
            elif kind == K_CREATE:
                word = self._ns_create(x[b], x[c], x[d])
                self._set_e(a, word.value, word.tag)
            elif kind == K_DERIVE:
                r_hi, r_flags = d
                word = self._ns_derive(TaggedWord(self.ev[b], self.et[b]), x[c], x[r_hi], x[r_flags])
                self._set_e(a, word.value, word.tag)
            elif kind == K_REVOKE:
                n = self._ns_revoke(TaggedWord(self.ev[b], self.et[b]))
                if a:
                    x[a] = n
            elif kind == K_INVAL:
                if b == 0:
                    self.remote_cache_invalidate(None)
                else:
                    meta = self.machine.directory.get(self.ev[b])
                    if meta is not None:
                        self.remote_cache_invalidate(meta.root_ns_id)
            elif kind == K_FLUSH:
                self.remote_cache_flush()
            elif kind == K_BARRIER:
                self.instret += 1
                self.pc = npc
                self._sync_time()
                self.status = NodeStatus.BARRIER
                return self.status
            elif kind == K_MARK:
                self.instret += 1
                self._sync_time()
                self.marks.append((imm, self.counters().as_dict()))
                self.pc = npc
                return self.status
            elif kind == K_HALT:
                self.instret += 1
                self._sync_time()
                self.status = NodeStatus.HALTED
                return self.status
        except _Trap as trap:
            return self._fault(trap.reason, pc)
        except CapabilityError as err:
            return self._fault(err.reason, pc)
        self.instret += 1
        self.pc = npc
        self.time = self.cpu + self.nlb + self.local + self.glob
        return self.status

    def _set_e(self, idx: int, value: int, tag: bool) -> None:
        if idx:
            self.ev[idx] = value & MASK64
            self.et[idx] = bool(tag)

    def _fault(self, reason: str, pc: int) -> NodeStatus:
        line = self.lines[pc] if 0 <= pc < len(self.lines) else 0
        self.fault = SimFault(reason, pc, line, self.id)
        self.status = NodeStatus.FAULTED
        self._sync_time()
        return self.status

    def run_until(self, limit_time, limit_id: int, budget) -> NodeStatus:
        """Step until the next instruction touches shared state at or after (limit_time, limit_id).

        Instructions that only read and write node-local state (registers, the
        private region, the private caches) run ahead freely. Everything that
        can observe or mutate another node's state waits its turn, so shared
        operations still happen in global (time, id) order.
        """
        me = self.id
        step = self.step
        shared = self._shared
        n = len(shared)
        while True:
            status = step()
            if status is not NodeStatus.RUNNING:
                return status
            t = self.time
            if t > budget:
                return status
            if t > limit_time or (t == limit_time and me > limit_id):
                pc = self.pc
                if pc >= n or shared[pc]:
                    return status
