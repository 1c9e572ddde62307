"""Assembly generators for the three workloads.

All randomness comes from xorshift32 with shifts (13, 17, 5)::

    x ^= (x << 13) & 0xFFFFFFFF
    x ^= x >> 17
    x ^= (x << 5) & 0xFFFFFFFF

seeded with ``seed & 0xFFFFFFFF`` (a zero seed is replaced by 0x9E3779B9);
each draw is the state after one update. Random choices are baked into the
programs' private ``.data`` so the simulator itself never draws numbers.

Programs rely on the boot convention of :mod:`zenosim.system`: ``a0`` is
the node id, ``a1`` the node count, ``e1`` the shared mailbox namespace.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterator

from ..asm import Program, parse_program
from ..isa import FLAG_LOCAL, FLAG_READ, FLAG_WRITE

PAGE = 4096
RW = FLAG_READ | FLAG_WRITE


class BenchKind(enum.Enum):
    GET_TRANSFERS = "get"
    RANDOM_ACCESS = "random"
    INTEGER_SORT = "sort"

    @classmethod
    def parse(cls, text: str) -> "BenchKind":
        text = text.strip().lower()
        aliases = {"gettransfers": "get", "get_transfers": "get", "randomaccess": "random",
                   "random_access": "random", "integersort": "sort", "integer_sort": "sort"}
        return cls(aliases.get(text, text))


@dataclass(frozen=True)
class BenchmarkSpec:
    """Workload parameters.

    ``element_count`` means total integers for the sort and accesses per node
    for random access; it is unused by get transfers.
    """

    kind: BenchKind = BenchKind.GET_TRANSFERS
    namespace_count: int = 128
    element_count: int = 0
    transfer_bytes: int = 4096
    ns_bytes: int = 32768
    seed: int = 1
    unroll: int = 4

    def __post_init__(self):
        object.__setattr__(self, "kind", BenchKind.parse(self.kind) if isinstance(self.kind, str) else self.kind)
        if self.element_count == 0:
            default = {BenchKind.INTEGER_SORT: 65536, BenchKind.RANDOM_ACCESS: 4096}.get(self.kind, 0)
            object.__setattr__(self, "element_count", default)
        for name in ("namespace_count", "transfer_bytes", "ns_bytes", "unroll"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.element_count < 0:
            raise ValueError("element_count must be non-negative")

    def with_(self, **kw) -> "BenchmarkSpec":
        return replace(self, **kw)


def xorshift32_stream(seed: int) -> Iterator[int]:
    x = seed & 0xFFFFFFFF or 0x9E3779B9
    while True:
        x ^= (x << 13) & 0xFFFFFFFF
        x ^= x >> 17
        x ^= (x << 5) & 0xFFFFFFFF
        yield x


def _round_up(n: int, m: int) -> int:
    return -(-n // m) * m


class _Text:
    def __init__(self, private_bytes: int):
        self.lines = [f".reserve {_round_up(max(private_bytes, 1), PAGE)}", ".text"]
        self.data: list[str] = []

    def __call__(self, line: str) -> None:
        self.lines.append(("" if line.endswith(":") else "    ") + line)

    def put(self, offset: int, width: str, values) -> None:
        values = list(values)
        if not values:
            return
        self.data.append(f".data {offset:#x}")
        for i in range(0, len(values), 16):
            self.data.append(f"    .{width} " + ", ".join(str(v) for v in values[i:i + 16]))

    def text(self) -> str:
        return "\n".join(self.lines + self.data + [".text", ""])


# ---------------------------------------------------------------------------- get transfers

def get_transfers_source(node: int, node_count: int, transfer_bytes: int = 4096, unroll: int = 4) -> str:
    """Each node fills one local namespace, then copies every node's namespace into private buffers."""
    del node  # identical code on every node; a0 carries the id
    t = transfer_bytes
    if t % 8:
        raise ValueError("transfer_bytes must be a multiple of 8")
    u = max(1, min(unroll, t // 8))
    while (t // 8) % u:
        u -= 1
    a = _Text(node_count * t + PAGE)
    a("li t0, 0")
    a(f"li t1, {t - 1}")
    a(f"li t2, {RW | FLAG_LOCAL}")
    a("ns.create e2, t0, t1, t2")
    a("slli s0, a0, 32")
    a("li t0, 0")
    a(f"li t1, {t}")
    a("init:")
    a("srli t3, t0, 3")
    a("or t3, t3, s0")
    a("esd t3, 0(t0), e2")
    a("addi t0, t0, 8")
    a("blt t0, t1, init")
    a("slli t3, a0, 3")
    a("ecsd e2, 0(t3), e1")
    a("rc.flush")
    a("barrier")
    a("rc.inval e1")
    a("stat.mark 1")
    a("li s1, 0")
    a("li s3, 0")
    a(f"li s4, {t}")
    a("get:")
    a("slli t3, s1, 3")
    a("ecld e3, 0(t3), e1")
    a("li t0, 0")
    a("mv t5, s3")
    a("copy:")
    for k in range(u):
        reg = "t4" if k % 2 == 0 else "t6"
        a(f"eld {reg}, {8 * k}(t0), e3")
        a(f"sd {reg}, {8 * k}(t5)")
    a(f"addi t0, t0, {8 * u}")
    a(f"addi t5, t5, {8 * u}")
    a("blt t0, s4, copy")
    a("add s3, s3, s4")
    a("addi s1, s1, 1")
    a("blt s1, a1, get")
    a("stat.mark 2")
    a("halt")
    return a.text()


def get_transfers_expected(node_count: int, transfer_bytes: int = 4096) -> bytes:
    """Private destination image every node should end with."""
    out = bytearray()
    for src in range(node_count):
        for k in range(transfer_bytes // 8):
            out += ((src << 32) | k).to_bytes(8, "little")
    return bytes(out)


# ---------------------------------------------------------------------------- random access

def random_access_plan(node_count: int, namespace_count: int, ns_bytes: int, accesses: int, seed: int):
    """Per node list of (namespace index, byte offset) pairs; offsets 4-aligned and in bounds."""
    rng = xorshift32_stream(seed)
    words = ns_bytes // 4
    plan = []
    for _ in range(node_count):
        node_plan = []
        for _ in range(accesses):
            ns = (next(rng) * namespace_count) >> 32
            off = ((next(rng) * words) >> 32) * 4
            node_plan.append((ns, off))
        plan.append(node_plan)
    return plan


def random_access_source(node: int, node_count: int, namespace_count: int = 128, ns_bytes: int = 32768,
                         accesses: int = 4096, seed: int = 1, plan=None) -> str:
    if ns_bytes % 8 or ns_bytes < 8:
        raise ValueError("ns_bytes must be a positive multiple of 8")
    if namespace_count * 8 > 65536:
        raise ValueError("too many namespaces for the mailbox")
    k = namespace_count
    if plan is None:
        plan = random_access_plan(node_count, k, ns_bytes, accesses, seed)
    mine = plan[node]
    idt = 0
    acc = _round_up(k * 8, 8)
    res = acc + 8 * len(mine)
    a = _Text(res + 8)
    a(f"li s2, {k}")
    a("mv s1, a0")
    a("li t0, 0")
    a(f"li t1, {ns_bytes - 1}")
    a(f"li t2, {RW}")
    a(f"li s3, {PAGE}")
    a(f"li t5, {ns_bytes}")
    a("create:")
    a("bge s1, s2, created")
    a("ns.create e2, t0, t1, t2")
    a("slli t3, s1, 32")
    a("li t4, 0")
    a("initp:")
    a("or t6, t3, t4")
    a("esd t6, 0(t4), e2")
    a("add t4, t4, s3")
    a("blt t4, t5, initp")
    a("slli t3, s1, 3")
    a("ecsd e2, 0(t3), e1")
    a("add s1, s1, a1")
    a("j create")
    a("created:")
    a("rc.flush")
    a("barrier")
    a("rc.inval e0")
    a(f"li s5, {idt}")
    a(f"li s6, {idt + 8 * k}")
    a("table:")
    a("ecld e3, 0(s5), e1")
    a("csd e3, 0(s5)")
    a("addi s5, s5, 8")
    a("blt s5, s6, table")
    a("stat.mark 1")
    a("li s8, 0")
    if mine:
        a(f"li s4, {acc}")
        a(f"li s7, {res}")
        a("access:")
        a("lwu t0, 0(s4)")
        a("lwu t1, 4(s4)")
        a("slli t0, t0, 3")
        a("cld e3, 0(t0)")
        a("elwu t2, 0(t1), e3")
        a("add s8, s8, t2")
        a("addi s4, s4, 8")
        a("blt s4, s7, access")
    a("stat.mark 2")
    a(f"li t0, {res}")
    a("sd s8, 0(t0)")
    a("halt")
    flat = []
    for ns, off in mine:
        flat.extend((ns, off))
    a.put(acc, "word", flat)
    return a.text()


def random_access_result_offset(namespace_count: int, accesses: int) -> int:
    return _round_up(namespace_count * 8, 8) + 8 * accesses


# ---------------------------------------------------------------------------- integer sort

@dataclass(frozen=True)
class SortLayout:
    keys: list
    shards: list
    buckets: int
    shift: int
    passes: int
    width: int


def sort_keys(total_ints: int, seed: int) -> list[int]:
    rng = xorshift32_stream(seed)
    return [next(rng) for _ in range(total_ints)]


def sort_layout(node_count: int, total_ints: int, buckets: int, seed: int) -> SortLayout:
    if buckets < 1 or buckets & (buckets - 1):
        raise ValueError("bucket count must be a power of two")
    if buckets * 8 > 65536:
        raise ValueError("too many buckets for the mailbox")
    keys = sort_keys(total_ints, seed)
    shards = [keys[i * total_ints // node_count:(i + 1) * total_ints // node_count] for i in range(node_count)]
    shift = 32 - (buckets.bit_length() - 1)
    passes = max(1, math.ceil(shift / 8))
    width = max(1, math.ceil(shift / passes))
    return SortLayout(keys, shards, buckets, shift, passes, width)


def _sort_tables(lay: SortLayout):
    n, b_count, shift = len(lay.shards), lay.buckets, lay.shift
    counts = [[0] * b_count for _ in range(n)]
    for i, shard in enumerate(lay.shards):
        row = counts[i]
        for key in shard:
            row[key >> shift] += 1
    seg_len = [[_round_up(c * 4, 8) for c in row] for row in counts]
    seg_off = [[0] * b_count for _ in range(n)]
    size = [0] * b_count
    for b in range(b_count):
        acc = 0
        for i in range(n):
            seg_off[i][b] = acc
            acc += seg_len[i][b]
        size[b] = acc
    total = [sum(counts[i][b] for i in range(n)) for b in range(b_count)]
    return counts, seg_len, seg_off, size, total


def _sort_regions(lay: SortLayout, tables, node: int):
    """Private-memory layout for one node: region offsets, owned buckets, exchange and gather rows."""
    counts, seg_len, _, size, total = tables
    b_count, n = lay.buckets, len(lay.shards)
    own = [b for b in range(node, b_count, n) if total[b] > 0]
    scratch = max((size[b] for b in own), default=8)
    ext_rows = [b for b in range(b_count) if counts[node][b] > 0]
    col_rows = [b for b in range(b_count) if total[b] > 0] if node == 0 else []
    sizes = [
        ("keys", 4 * len(lay.shards[node])), ("stage", sum(seg_len[node])), ("scur", 8 * b_count),
        ("sz", 8 * b_count), ("ext", 32 * len(ext_rows)), ("own", 24 * len(own)), ("col", 24 * len(col_rows)),
        ("idt", 8 * b_count), ("count", 8 << lay.width), ("a", scratch), ("b", scratch),
        ("out", 4 * sum(total) + 8 if node == 0 else 0),
    ]
    regions = {}
    cur = 0
    for name, nbytes in sizes:
        regions[name] = cur
        cur = _round_up(cur + nbytes, 8)
    return regions, own, ext_rows, col_rows, cur


def integer_sort_sources(node_count: int, total_ints: int = 65536, buckets: int = 128, seed: int = 1) -> list[str]:
    """Bucket sort: local partition, exchange into per-bucket namespaces, per-owner radix sort, gather on node 0."""
    lay = sort_layout(node_count, total_ints, buckets, seed)
    tables = _sort_tables(lay)
    counts, seg_len, seg_off, size, total = tables
    b_count, shift = lay.buckets, lay.shift
    mask = (1 << lay.width) - 1
    pad_low = (1 << shift) - 1 if shift < 32 else 0xFFFFFFFF
    out = []
    for node in range(node_count):
        shard = lay.shards[node]
        regions, own, ext_rows, col_rows, end = _sort_regions(lay, tables, node)
        keys_at, stage_at, scur_at, sz_at = regions["keys"], regions["stage"], regions["scur"], regions["sz"]
        ext_at, own_at, col_at, idt_at = regions["ext"], regions["own"], regions["col"], regions["idt"]
        c_at, buf_a, buf_b, out_at = regions["count"], regions["a"], regions["b"], regions["out"]
        a = _Text(end + 8)

        stage_pos, scur, stage_init = [], [], []
        pos = stage_at
        for b in range(b_count):
            stage_pos.append(pos)
            scur.append(pos)
            if counts[node][b] % 2:
                stage_init.append((pos + 4 * counts[node][b], (b << shift | pad_low) & 0xFFFFFFFF))
            pos += seg_len[node][b]

        a("mv s1, a0")
        a(f"li s2, {b_count}")
        a(f"li s7, {idt_at}")
        a(f"li s8, {sz_at}")
        a("li t0, 0")
        a(f"li t2, {RW | FLAG_LOCAL}")
        a("create:")
        a("bge s1, s2, created")
        a("slli t3, s1, 3")
        a("add t4, t3, s8")
        a("ld t1, 0(t4)")
        a("ns.create e2, t0, t1, t2")
        a("ecsd e2, 0(t3), e1")
        a("add s1, s1, a1")
        a("j create")
        a("created:")
        if shard:
            a(f"li s4, {keys_at}")
            a(f"li s5, {keys_at + 4 * len(shard)}")
            a(f"li s8, {scur_at}")
            a("part:")
            a("lwu t0, 0(s4)")
            a(f"srli t1, t0, {shift}")
            a("slli t1, t1, 3")
            a("add t1, t1, s8")
            a("ld t2, 0(t1)")
            a("sw t0, 0(t2)")
            a("addi t2, t2, 4")
            a("sd t2, 0(t1)")
            a("addi s4, s4, 4")
            a("blt s4, s5, part")
        a("rc.flush")
        a("barrier")
        a("rc.inval e0")
        a("li t0, 0")
        a(f"li t1, {8 * b_count}")
        a("ids:")
        a("ecld e3, 0(t0), e1")
        a("add t2, t0, s7")
        a("csd e3, 0(t2)")
        a("addi t0, t0, 8")
        a("blt t0, t1, ids")
        a("stat.mark 1")
        if ext_rows:
            a(f"li s4, {ext_at}")
            a(f"li s5, {ext_at + 32 * len(ext_rows)}")
            a("exch:")
            a("ld t0, 0(s4)")
            a("ld t1, 8(s4)")
            a("ld t2, 16(s4)")
            a("ld t3, 24(s4)")
            a("add t3, t3, s7")
            a("cld e3, 0(t3)")
            a("push:")
            a("ld t4, 0(t0)")
            a("esd t4, 0(t2), e3")
            a("addi t0, t0, 8")
            a("addi t2, t2, 8")
            a("bltu t0, t1, push")
            a("addi s4, s4, 32")
            a("blt s4, s5, exch")
        a("rc.flush")
        a("barrier")
        a("stat.mark 2")
        if own:
            a(f"li s4, {own_at}")
            a(f"li s5, {own_at + 24 * len(own)}")
            a(f"li s3, {c_at}")
            a("bucket:")
            a("ld t3, 0(s4)")
            a("add t3, t3, s7")
            a("cld e3, 0(t3)")
            a("ld s9, 8(s4)")
            a("li t0, 0")
            a(f"li t5, {buf_a}")
            a("fetch:")
            a("eld t4, 0(t0), e3")
            a("sd t4, 0(t5)")
            a("addi t0, t0, 8")
            a("addi t5, t5, 8")
            a("bltu t0, s9, fetch")
            src, dst = buf_a, buf_b
            for p in range(lay.passes):
                sh = p * lay.width
                a(f"li s10, {src}")
                a(f"li s11, {dst}")
                a("add s6, s10, s9")
                a(f"li t0, {c_at}")
                a(f"li t1, {c_at + 8 * (mask + 1)}")
                a(f"clear{p}:")
                a("sd x0, 0(t0)")
                a("addi t0, t0, 8")
                a(f"blt t0, t1, clear{p}")
                a("mv t0, s10")
                a(f"hist{p}:")
                a("lwu t2, 0(t0)")
                a(f"srli t2, t2, {sh}")
                a(f"andi t2, t2, {mask}")
                a("slli t2, t2, 3")
                a("add t2, t2, s3")
                a("ld t3, 0(t2)")
                a("addi t3, t3, 1")
                a("sd t3, 0(t2)")
                a("addi t0, t0, 4")
                a(f"blt t0, s6, hist{p}")
                a(f"li t0, {c_at}")
                a("mv t4, s11")
                a(f"prefix{p}:")
                a("ld t3, 0(t0)")
                a("sd t4, 0(t0)")
                a("slli t3, t3, 2")
                a("add t4, t4, t3")
                a("addi t0, t0, 8")
                a(f"blt t0, t1, prefix{p}")
                a("mv t0, s10")
                a(f"scatter{p}:")
                a("lwu t2, 0(t0)")
                a(f"srli t5, t2, {sh}")
                a(f"andi t5, t5, {mask}")
                a("slli t5, t5, 3")
                a("add t5, t5, s3")
                a("ld t3, 0(t5)")
                a("sw t2, 0(t3)")
                a("addi t3, t3, 4")
                a("sd t3, 0(t5)")
                a("addi t0, t0, 4")
                a(f"blt t0, s6, scatter{p}")
                src, dst = dst, src
            a("ld s9, 16(s4)")
            a("li t0, 0")
            a(f"li t5, {src}")
            a("store:")
            a("ld t4, 0(t5)")
            a("esd t4, 0(t0), e3")
            a("addi t0, t0, 8")
            a("addi t5, t5, 8")
            a("bltu t0, s9, store")
            a("addi s4, s4, 24")
            a("blt s4, s5, bucket")
        a("rc.flush")
        a("barrier")
        if col_rows:
            a("rc.inval e0")
            a(f"li s4, {col_at}")
            a(f"li s5, {col_at + 24 * len(col_rows)}")
            a(f"li s6, {out_at}")
            a("gather:")
            a("ld t3, 0(s4)")
            a("add t3, t3, s7")
            a("cld e3, 0(t3)")
            a("ld t1, 8(s4)")
            a("li t0, 0")
            a("pull:")
            a("eld t4, 0(t0), e3")
            a("sw t4, 0(s6)")
            a("srli t4, t4, 32")
            a("sw t4, 4(s6)")
            a("addi t0, t0, 8")
            a("addi s6, s6, 8")
            a("bltu t0, t1, pull")
            a("ld t5, 16(s4)")
            a("sub s6, s6, t5")
            a("addi s4, s4, 24")
            a("blt s4, s5, gather")
        a("stat.mark 3")
        a("halt")

        a.put(keys_at, "word", shard)
        for off, pad in stage_init:
            a.put(off, "word", [pad])
        a.put(scur_at, "dword", scur)
        a.put(sz_at, "dword", [max(size[b], 8) - 1 for b in range(b_count)])
        ext = []
        for b in ext_rows:
            ext.extend((stage_pos[b], stage_pos[b] + seg_len[node][b], seg_off[node][b], 8 * b))
        a.put(ext_at, "dword", ext)
        own_tab = []
        for b in own:
            own_tab.extend((8 * b, size[b], _round_up(total[b] * 4, 8)))
        a.put(own_at, "dword", own_tab)
        col = []
        for b in col_rows:
            col.extend((8 * b, _round_up(total[b] * 4, 8), 4 if total[b] % 2 else 0))
        a.put(col_at, "dword", col)
        out.append(a.text())
    return out


def integer_sort_output_offset(node_count: int, total_ints: int, buckets: int, seed: int) -> int:
    """Private offset of node 0's gathered output."""
    lay = sort_layout(node_count, total_ints, buckets, seed)
    return _sort_regions(lay, _sort_tables(lay), 0)[0]["out"]


# ---------------------------------------------------------------------------- front door

def generate_text(spec: BenchmarkSpec, node_count: int) -> list[str]:
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    if spec.kind is BenchKind.GET_TRANSFERS:
        src = get_transfers_source(0, node_count, spec.transfer_bytes, spec.unroll)
        return [src] * node_count
    if spec.kind is BenchKind.RANDOM_ACCESS:
        plan = random_access_plan(node_count, spec.namespace_count, spec.ns_bytes, spec.element_count, spec.seed)
        return [random_access_source(i, node_count, spec.namespace_count, spec.ns_bytes, spec.element_count,
                                     spec.seed, plan) for i in range(node_count)]
    return integer_sort_sources(node_count, spec.element_count, spec.namespace_count, spec.seed)


def generate(spec: BenchmarkSpec, node_count: int) -> list[Program]:
    texts = generate_text(spec, node_count)
    cache: dict[str, Program] = {}
    progs = []
    for t in texts:
        if t not in cache:
            cache[t] = parse_program(t)
        progs.append(cache[t])
    return progs


def sort_reference(spec: BenchmarkSpec) -> list[int]:
    return sorted(sort_keys(spec.element_count, spec.seed))
