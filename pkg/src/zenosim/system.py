"""Mesh of nodes sharing one namespace directory, plus the deterministic scheduler.

Boot convention for every program:

* ``a0`` holds the node id and ``a1`` the node count.
* ``e1`` holds a tagged capability for the shared mailbox namespace
  (``SystemConfig.shared_bytes`` bytes, created by node 0 before the run,
  pages interleaved across nodes). Programs exchange namespace ids through it.
* Plain loads/stores address the node's private region, which is preloaded
  with the program's ``.data`` bytes.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .asm import Program
from .capability import NamespaceDirectory, TaggedWord
from .config import PAGE_BYTES, SystemConfig
from .interconnect import Network
from .isa import FLAG_LOCAL, FLAG_READ, FLAG_WRITE
from .memory import MAX_PAGES_PER_NAMESPACE, PAGE_SHIFT, NamespaceTooLarge, NodeMemory, PageTables
from .node import COUNTER_FIELDS, Node, NodeStatus, PerfCounters, perms_from_flags

MAILBOX_EREG = 1
BUCKETS = ("cpu", "nlb", "local", "global")


class Deadlock(Exception):
    pass


class Machine:
    """Shared state of one simulated system: memories, directory, page tables, mesh and nodes."""

    def __init__(self, config: SystemConfig, programs: Union[Program, Sequence[Program]], trace: Optional[list] = None):
        n = config.node_count
        if isinstance(programs, Program):
            programs = [programs] * n
        programs = list(programs)
        if len(programs) != n:
            raise ValueError(f"need {n} programs for a {config.mesh} mesh, got {len(programs)}")
        self.config = config
        self.node_count = n
        self.programs = programs
        self.memories = []
        for i, prog in enumerate(programs):
            if prog.data_extent > prog.private_bytes:
                raise ValueError(f"node {i}: .data extends past the private region")
            mem = NodeMemory(i, prog.private_bytes)
            for off, blob in prog.data_segments:
                mem.private[off:off + len(blob)] = blob
            self.memories.append(mem)
        self.directory = NamespaceDirectory(n, page_table_allocator=lambda node: self.memories[node].alloc_page())
        self.tables = PageTables()
        self.network = Network(config.mesh_width, config.mesh_height, config.latency, trace=trace)
        self.nodes = [Node(i, self, programs[i], trace) for i in range(n)]
        self.network.servers = [node.serve for node in self.nodes]
        self.mailbox = self.create_namespace(0, 0, config.shared_bytes - 1, FLAG_READ | FLAG_WRITE)
        for node in self.nodes:
            node.ev[MAILBOX_EREG] = self.mailbox.value
            node.et[MAILBOX_EREG] = True
            node.x[10] = node.id
            node.x[11] = n

    def create_namespace(self, node: int, lo: int, hi: int, flags: int) -> TaggedWord:
        """Create a root namespace and back every page of [lo, hi] with physical memory."""
        if 0 <= lo <= hi and (hi >> PAGE_SHIFT) - (lo >> PAGE_SHIFT) >= MAX_PAGES_PER_NAMESPACE:
            raise NamespaceTooLarge(f"[{lo}, {hi}] spans more than {MAX_PAGES_PER_NAMESPACE} pages")
        directory = self.directory
        word = directory.create(node, lo, hi, perms_from_flags(flags))
        meta = directory.lookup(word.value)
        table = self.tables.table(directory.home_node(word.value), meta.page_table_ppn)
        n = self.node_count
        for k, vpage in enumerate(range(lo >> PAGE_SHIFT, (hi >> PAGE_SHIFT) + 1)):
            owner = node if flags & FLAG_LOCAL else (node + k) % n
            table[vpage] = (owner, self.memories[owner].alloc_page())
        return word

    def barrier_latency(self) -> int:
        if self.node_count == 1:
            return 0
        lat = self.config.latency
        return 2 * self.network.max_hops_from(0) * lat.router_hop + 2 * lat.link_flit

    # ------------------------------------------------------------------ final state

    def namespace_image(self) -> dict[int, dict[int, bytes]]:
        """Home-memory contents per hierarchy root: {root: {vpage: page bytes}} (all-zero pages omitted)."""
        out: dict[int, dict[int, bytes]] = {}
        for meta in self.directory.entries():
            if meta.root_ns_id != meta.ns_id:
                continue
            home = self.directory.home_node(meta.ns_id)
            pages = {}
            for vpage, (owner, ppn) in sorted(self.tables.table(home, meta.page_table_ppn).items()):
                data = self.memories[owner].read(ppn, 0, PAGE_BYTES)
                if any(data):
                    pages[vpage] = data
            out[meta.ns_id] = pages
        return out

    def architectural_state(self) -> dict:
        nodes = []
        for node in self.nodes:
            mem = node.memory
            nodes.append({
                "x": list(node.x),
                "e": [(v, t) for v, t in zip(node.ev, node.et)],
                "private": bytes(mem.private),
                "private_tags": sorted(mem.private_tags),
                "status": node.status.value,
                "fault": node.fault.reason if node.fault else None,
                "fault_pc": node.fault.pc if node.fault else None,
            })
        return {"nodes": nodes, "namespaces": self.namespace_image()}


@dataclass
class RunReport:
    mode: str
    mesh: str
    node_count: int
    counters: list[PerfCounters]
    faults: list[dict] = field(default_factory=list)
    marks: list[list] = field(default_factory=list)

    @property
    def total_instructions(self) -> int:
        return sum(c.instructions_committed for c in self.counters)

    @property
    def max_cycles(self) -> int:
        return max((c.total_cycles for c in self.counters), default=0)

    @property
    def ipc(self) -> float:
        """Aggregate IPC: instructions summed over nodes divided by the slowest node's cycles."""
        cycles = self.max_cycles
        return self.total_instructions / cycles if cycles else 0.0

    def bucket_totals(self) -> dict[str, int]:
        return {
            "cpu": sum(c.cpu_cycles for c in self.counters),
            "nlb": sum(c.nlb_cycles for c in self.counters),
            "local": sum(c.local_mem_cycles for c in self.counters),
            "global": sum(c.global_mem_cycles for c in self.counters),
        }

    def total(self, name: str) -> int:
        return sum(getattr(c, name) for c in self.counters)

    @property
    def fault_free(self) -> bool:
        return not self.faults

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mesh": self.mesh,
            "node_count": self.node_count,
            "ipc_definition": "sum(instructions) / max(node total_cycles)",
            "ipc": self.ipc,
            "fractions": aggregate_fractions(self),
            "totals": {name: self.total(name) for name in COUNTER_FIELDS},
            "nodes": [c.as_dict() for c in self.counters],
            "faults": self.faults,
            "marks": self.marks,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def aggregate_fractions(report: RunReport) -> dict[str, float]:
    """Share of all node-cycles spent in each bucket; sums to 1."""
    totals = report.bucket_totals()
    grand = sum(totals.values())
    if grand == 0:
        return {k: 0.0 for k in BUCKETS}
    return {k: totals[k] / grand for k in BUCKETS}


def simulate(config: SystemConfig, programs, trace: Optional[list] = None) -> tuple[RunReport, Machine]:
    """Run every node to halt or fault; returns the report and the final machine state.

    Nodes advance in (local clock, node id) order, so the interleaving of
    directory mutations and remote requests is a pure function of the inputs.
    """
    machine = Machine(config, programs, trace)
    nodes = machine.nodes
    budget = config.max_cycles
    ready = [(0, node.id) for node in nodes if node.status is NodeStatus.RUNNING]
    heapq.heapify(ready)
    waiting: list[Node] = []
    live = len(ready)
    inf = float("inf")
    while ready:
        _, nid = heapq.heappop(ready)
        node = nodes[nid]
        if ready:
            limit_t, limit_id = ready[0]
        else:
            limit_t, limit_id = inf, -1
        status = node.run_until(limit_t, limit_id, budget)
        if node.time > budget:
            raise Deadlock(f"node {nid} exceeded the {budget}-cycle budget at pc {node.pc}")
        if status is NodeStatus.RUNNING:
            heapq.heappush(ready, (node.time, nid))
            continue
        if status is NodeStatus.BARRIER:
            waiting.append(node)
        else:
            live -= 1
        if waiting and len(waiting) == live and not ready:
            release = max(w.time for w in waiting) + machine.barrier_latency()
            for w in waiting:
                w.wait_until(release)
                w.status = NodeStatus.RUNNING
                heapq.heappush(ready, (w.time, w.id))
            waiting = []
    if waiting:
        # Every remaining node is parked at a barrier that can never complete.
        raise Deadlock(f"nodes {[w.id for w in waiting]} stuck at a barrier")
    faults = [
        {"node": n.id, "reason": n.fault.reason, "pc": n.fault.pc, "line": n.fault.line, "cycle": n.time}
        for n in nodes if n.fault is not None
    ]
    report = RunReport(
        mode=config.mode.value,
        mesh=config.mesh,
        node_count=config.node_count,
        counters=[n.counters() for n in nodes],
        faults=faults,
        marks=[[(tag, snap) for tag, snap in n.marks] for n in nodes],
    )
    return report, machine


def run(config: SystemConfig, programs) -> RunReport:
    return simulate(config, programs)[0]
