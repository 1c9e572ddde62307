"""Self-checks behind ``zenosim check``.

Each check pairs a piece of the simulator with a separately written oracle:
the access predicate against a byte-by-byte scan, revocation against a
tree walk, and the timing model against the zero-latency interpreter.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .capability import MASK64, AccessKind, Fault, NamespaceDirectory, NamespaceMetadata, Perms, check_access
from .config import Mode, SystemConfig
from .functional import run_functional
from .system import simulate


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    mismatches: list = field(default_factory=list)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def brute_force_decision(meta: NamespaceMetadata, offset: int, size: int, kind: AccessKind):
    """Reference predicate: scan every touched byte instead of comparing endpoints."""
    if not meta.valid:
        return Fault.REVOKED
    allowed = {AccessKind.READ: meta.perm_read, AccessKind.WRITE: meta.perm_write,
               AccessKind.EXECUTE: meta.perm_exec}[kind]
    if not allowed:
        return Fault.PERMISSION_DENIED
    for k in range(size):
        addr = offset + k
        if addr > MASK64 or not meta.min_bound <= addr <= meta.max_bound:
            return Fault.OUT_OF_BOUNDS
    return None


def _interesting(rng: random.Random, lo: int, hi: int) -> int:
    """Offsets biased towards the bounds and the ends of the 64-bit space."""
    pick = rng.randrange(6)
    if pick == 0:
        return max(0, lo - rng.randrange(0, 9))
    if pick == 1:
        return min(MASK64, hi - rng.randrange(0, 9))
    if pick == 2:
        return min(MASK64, hi + rng.randrange(0, 9))
    if pick == 3:
        return MASK64 - rng.randrange(0, 17)
    if pick == 4:
        return rng.randrange(lo, hi + 1)
    return rng.getrandbits(64)


def random_metadata(rng: random.Random) -> NamespaceMetadata:
    if rng.random() < 0.2:
        lo = MASK64 - rng.randrange(0, 64)
    else:
        lo = rng.choice([0, rng.randrange(0, 1 << 20), rng.getrandbits(64)])
    hi = min(MASK64, lo + rng.choice([0, 1, 7, 4095, rng.randrange(0, 1 << 16), rng.getrandbits(64)]))
    return NamespaceMetadata(
        ns_id=rng.randrange(1, 1 << 20), min_bound=lo, max_bound=hi,
        perm_read=rng.random() < 0.8, perm_write=rng.random() < 0.6, perm_exec=rng.random() < 0.3,
        valid=rng.random() < 0.85, page_table_ppn=1, root_ns_id=1, parent_ns_id=0,
    )


def check_access_oracle(cases: int = 10_000, seed: int = 1) -> CheckResult:
    rng = random.Random(seed)
    bad = []
    for _ in range(cases):
        meta = random_metadata(rng)
        size = rng.choice([1, 2, 4, 8, 16])
        offset = _interesting(rng, meta.min_bound, meta.max_bound)
        kind = rng.choice(list(AccessKind))
        got = check_access(meta, offset, size, kind)
        want = brute_force_decision(meta, offset, size, kind)
        if got != want:
            bad.append((meta, offset, size, kind, got, want))
    return CheckResult("check_access vs brute force", not bad,
                       f"{cases - len(bad)}/{cases} agree", bad[:10])


def revocation_tree(size: int = 200, seed: int = 1, node_count: int = 16) -> CheckResult:
    """Grow a random derivation tree, revoke random subtrees, probe every namespace."""
    rng = random.Random(seed)
    d = NamespaceDirectory(node_count)
    root = d.create(0, 0, (1 << 20) - 1, Perms(True, True, True))
    words = [root]
    parent_of = {root.value: None}
    while len(words) < size:
        p = rng.choice(words)
        pm = d.lookup(p.value)
        lo = rng.randint(pm.min_bound, pm.max_bound)
        hi = rng.randint(lo, pm.max_bound)
        perms = Perms(pm.perm_read and rng.random() < 0.9, pm.perm_write and rng.random() < 0.8,
                      pm.perm_exec and rng.random() < 0.5)
        if not (perms.read or perms.write or perms.execute):
            perms = Perms(pm.perm_read, False, False)
        child = d.derive(p, lo, hi, perms, node=rng.randrange(node_count))
        words.append(child)
        parent_of[child.value] = p.value

    def ancestors(ns):
        while ns is not None:
            yield ns
            ns = parent_of[ns]

    revoked: set[int] = set()
    bad = []
    for target in rng.sample(words, 8):
        if d.lookup(target.value).valid:
            d.revoke(target)
        revoked.add(target.value)
        for w in words:
            meta = d.lookup(w.value)
            dead = any(a in revoked for a in ancestors(w.value))
            for kind in AccessKind:
                got = check_access(meta, meta.min_bound, 1, kind)
                if dead and got is not Fault.REVOKED:
                    bad.append((w.value, kind, got))
                if not dead and got is Fault.REVOKED:
                    bad.append((w.value, kind, got))
    dead_total = sum(1 for w in words if any(a in revoked for a in ancestors(w.value)))
    return CheckResult(f"revocation over a {size}-namespace tree", not bad,
                       f"{dead_total} revoked descendants, {len(bad)} wrong decisions", bad[:10])


def oracle_equivalence(mesh: str = "2x2", mode: Mode = Mode.ZENO, sort_ints: int = 4096,
                       random_accesses: int = 256) -> list[CheckResult]:
    """Timing model vs zero-latency interpreter on all three workloads at reduced scale."""
    from .bench.generators import BenchKind, BenchmarkSpec, generate, integer_sort_output_offset, sort_reference

    cfg = replace(SystemConfig().with_mesh(mesh), mode=mode)
    n = cfg.node_count
    specs = [
        BenchmarkSpec(kind=BenchKind.GET_TRANSFERS),
        BenchmarkSpec(kind=BenchKind.RANDOM_ACCESS, element_count=random_accesses),
        BenchmarkSpec(kind=BenchKind.INTEGER_SORT, element_count=sort_ints),
    ]
    out = []
    for spec in specs:
        progs = generate(spec, n)
        report, machine = simulate(cfg, progs)
        timed = machine.architectural_state()
        ref = run_functional(cfg, progs).architectural_state()
        same = timed == ref
        detail = "states identical" if same else "architectural states differ"
        ok = same and report.fault_free
        if not report.fault_free:
            detail += f"; faults {report.faults[:2]}"
        if spec.kind is BenchKind.INTEGER_SORT:
            at = integer_sort_output_offset(n, spec.element_count, spec.namespace_count, spec.seed)
            raw = timed["nodes"][0]["private"][at:at + 4 * spec.element_count]
            got = [int.from_bytes(raw[i:i + 4], "little") for i in range(0, len(raw), 4)]
            sorted_ok = got == sort_reference(spec)
            ok = ok and sorted_ok
            detail += "; output sorted" if sorted_ok else "; output differs from host sort"
        out.append(CheckResult(f"oracle equivalence {spec.kind.value} on {mesh} ({mode.value})", ok, detail))
    return out


def run_checks(quick: bool = False) -> list[CheckResult]:
    results = [check_access_oracle(1000 if quick else 10_000), revocation_tree(50 if quick else 200)]
    results += oracle_equivalence(sort_ints=1024 if quick else 4096, random_accesses=64 if quick else 256)
    return results
