"""Configuration sweeps and their CSV output.

A sweep is the cross product ``meshes x ntlb_sizes x mdc_sizes x
namespace_counts x modes`` in that nesting order, followed by one reference
row: an xBGAS baseline run on a 2x2 mesh with the first N-TLB, MDC and
namespace sizes. Every row's ``normalized_ipc`` divides by that reference IPC.

When ``overhead`` is on, each zeno point is paired with a baseline run of the
same mesh, structure sizes and workload. Those companion runs only feed the
``baseline_global_access_cycles`` and ``global_overhead`` columns; they do not
add rows.

Column meanings:

* counter columns are sums over all nodes; ``max_cycles`` is the slowest node.
* ``global_access_cycles`` is ``global_mem_cycles - barrier_wait_cycles``,
  i.e. cycles actually spent on remote traffic.
* ``baseline_total_cycles`` is ``total_cycles`` of the matching baseline run.
* ``global_overhead`` is zeno ``global_access_cycles`` over the matching
  baseline's.
* ``overhead_vs_min_namespaces`` divides ``global_overhead`` by the value at
  the smallest namespace count with otherwise identical settings.
* ``fault_count`` / ``first_fault`` record faults; the sweep keeps going.
"""
from __future__ import annotations

import configparser
import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from ..config import Mode, SystemConfig, config_from_mapping, parse_mesh
from ..node import COUNTER_FIELDS
from ..system import Deadlock, aggregate_fractions, run
from .generators import BenchKind, BenchmarkSpec, generate

NLB_SIZES = (4, 8, 16, 32, 64, 128)
MESHES = ("2x2", "3x3", "4x4", "5x5", "6x6", "7x7", "8x8")

CONFIG_COLUMNS = ["row", "role", "benchmark", "mesh", "nodes", "mode", "ntlb_entries", "mdc_entries",
                  "namespace_count", "element_count", "seed"]
DERIVED_COLUMNS = ["max_cycles", "ipc", "normalized_ipc", "frac_cpu", "frac_nlb", "frac_local", "frac_global",
                   "ntlb_hit_rate", "mdc_hit_rate", "ni_mdc_hit_rate", "l1d_hit_rate", "l2_hit_rate",
                   "remote_cache_hit_rate", "global_access_cycles", "baseline_total_cycles",
                   "baseline_global_access_cycles", "global_overhead", "overhead_vs_min_namespaces",
                   "fault_count", "first_fault"]
COLUMNS = CONFIG_COLUMNS + list(COUNTER_FIELDS) + DERIVED_COLUMNS


@dataclass(frozen=True)
class SweepSpec:
    meshes: tuple = ("4x4",)
    ntlb_sizes: tuple = (32,)
    mdc_sizes: tuple = (32,)
    namespace_counts: tuple = (128,)
    modes: tuple = (Mode.ZENO,)
    overhead: bool = True
    base: SystemConfig = SystemConfig()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(Mode.parse(m) for m in self.modes))
        for name in ("meshes", "ntlb_sizes", "mdc_sizes", "namespace_counts", "modes"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        for mesh in self.meshes:
            parse_mesh(mesh)

    def points(self) -> list[tuple[str, int, int, int, Mode]]:
        return [(mesh, ntlb, mdc, ns, mode)
                for mesh in self.meshes
                for ntlb in self.ntlb_sizes
                for mdc in self.mdc_sizes
                for ns in self.namespace_counts
                for mode in self.modes]

    @property
    def row_count(self) -> int:
        return len(self.points()) + 1

    @classmethod
    def mesh_sweep(cls, **kw) -> "SweepSpec":
        return cls(meshes=MESHES, **kw)

    @classmethod
    def nlb_sweep(cls, **kw) -> "SweepSpec":
        return cls(ntlb_sizes=NLB_SIZES, mdc_sizes=NLB_SIZES, **kw)

    @classmethod
    def namespace_sweep(cls, **kw) -> "SweepSpec":
        return cls(namespace_counts=(32, 64, 128), **kw)


def _split(value: str) -> list[str]:
    return [v for v in value.replace(",", " ").split() if v]


def load_sweep(path: Union[str, Path]) -> tuple[SweepSpec, BenchmarkSpec]:
    """Read ``[sweep]``, ``[benchmark]``, ``[system]`` and ``[latency]`` sections from an INI file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    system = dict(parser["system"]) if parser.has_section("system") else {}
    latency = dict(parser["latency"]) if parser.has_section("latency") else {}
    base = config_from_mapping(system, latency)
    sw = dict(parser["sweep"]) if parser.has_section("sweep") else {}
    known = {"meshes", "ntlb", "mdc", "namespaces", "modes", "overhead"}
    if set(sw) - known:
        raise ValueError(f"unknown [sweep] keys: {sorted(set(sw) - known)}")
    spec = SweepSpec(
        meshes=tuple(_split(sw.get("meshes", base.mesh))),
        ntlb_sizes=tuple(int(v) for v in _split(sw.get("ntlb", str(base.ntlb_entries)))),
        mdc_sizes=tuple(int(v) for v in _split(sw.get("mdc", str(base.mdc_entries)))),
        namespace_counts=tuple(int(v) for v in _split(sw.get("namespaces", "128"))),
        modes=tuple(_split(sw.get("modes", "zeno"))),
        overhead=parser.getboolean("sweep", "overhead", fallback=True) if sw else True,
        base=base,
    )
    bm = dict(parser["benchmark"]) if parser.has_section("benchmark") else {}
    bench = BenchmarkSpec(
        kind=BenchKind.parse(bm.pop("kind", "sort")),
        **{k: int(v, 0) for k, v in bm.items()},
    )
    return spec, bench


# ---------------------------------------------------------------------- execution

def _simulate(task: tuple[SystemConfig, BenchmarkSpec]) -> dict:
    cfg, bench = task
    try:
        report = run(cfg, generate(bench, cfg.node_count))
    except Deadlock as err:
        return {"error": f"Deadlock: {err}"}
    totals = {name: report.total(name) for name in COUNTER_FIELDS}
    return {
        "totals": totals,
        "max_cycles": report.max_cycles,
        "ipc": report.ipc,
        "fractions": aggregate_fractions(report),
        "faults": report.faults,
    }


def _config(spec: SweepSpec, mesh: str, ntlb: int, mdc: int, mode: Mode) -> SystemConfig:
    return replace(spec.base.with_mesh(mesh), ntlb_entries=ntlb, mdc_entries=mdc, mode=mode)


def _rate(hits: int, misses: int) -> Optional[float]:
    return hits / (hits + misses) if hits + misses else None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def run_sweep(spec: SweepSpec, bench: BenchmarkSpec, jobs: int = 1) -> list[dict]:
    """Simulate every point and return rows (dicts keyed by ``COLUMNS``) in configuration order."""
    points = spec.points()
    ref = ("2x2", spec.ntlb_sizes[0], spec.mdc_sizes[0], spec.namespace_counts[0], Mode.BASELINE)

    tasks: list[tuple[SystemConfig, BenchmarkSpec]] = []
    index: dict[tuple, int] = {}

    def want(point) -> int:
        if point not in index:
            mesh, ntlb, mdc, ns, mode = point
            index[point] = len(tasks)
            tasks.append((_config(spec, mesh, ntlb, mdc, mode), bench.with_(namespace_count=ns)))
        return index[point]

    for p in points:
        want(p)
    want(ref)
    if spec.overhead:
        for mesh, ntlb, mdc, ns, mode in points:
            want((mesh, ntlb, mdc, ns, Mode.BASELINE))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate, tasks))
    else:
        results = [_simulate(t) for t in tasks]

    ref_result = results[index[ref]]
    ref_ipc = ref_result.get("ipc") or None

    def global_access(res: dict) -> Optional[int]:
        if "totals" not in res:
            return None
        t = res["totals"]
        return t["global_mem_cycles"] - t["barrier_wait_cycles"]

    def overhead(point) -> Optional[float]:
        mesh, ntlb, mdc, ns, mode = point
        base_point = (mesh, ntlb, mdc, ns, Mode.BASELINE)
        if base_point not in index:
            return None
        z, b = global_access(results[index[point]]), global_access(results[index[base_point]])
        if z is None or not b:
            return None
        return z / b

    rows = []
    min_ns = min(spec.namespace_counts)
    for i, point in enumerate(points + [ref]):
        mesh, ntlb, mdc, ns, mode = point
        res = results[index[point]]
        w, h = parse_mesh(mesh)
        row = {
            "row": i, "role": "reference_baseline" if i == len(points) else "point",
            "benchmark": bench.kind.value, "mesh": mesh, "nodes": w * h, "mode": mode.value,
            "ntlb_entries": ntlb, "mdc_entries": mdc, "namespace_count": ns,
            "element_count": bench.element_count, "seed": bench.seed,
        }
        if "error" in res:
            row.update({"fault_count": 1, "first_fault": res["error"]})
            rows.append(row)
            continue
        t = res["totals"]
        row.update(t)
        fr = res["fractions"]
        ov = overhead(point)
        ov_min = overhead((mesh, ntlb, mdc, min_ns, mode))
        base_point = (mesh, ntlb, mdc, ns, Mode.BASELINE)
        row.update({
            "max_cycles": res["max_cycles"],
            "ipc": res["ipc"],
            "normalized_ipc": res["ipc"] / ref_ipc if ref_ipc else None,
            "frac_cpu": fr["cpu"], "frac_nlb": fr["nlb"], "frac_local": fr["local"], "frac_global": fr["global"],
            "ntlb_hit_rate": _rate(t["ntlb_hits"], t["ntlb_misses"]),
            "mdc_hit_rate": _rate(t["mdc_hits"], t["mdc_misses"]),
            "ni_mdc_hit_rate": _rate(t["ni_mdc_hits"], t["ni_mdc_misses"]),
            "l1d_hit_rate": _rate(t["l1d_hits"], t["l1d_misses"]),
            "l2_hit_rate": _rate(t["l2_hits"], t["l2_misses"]),
            "remote_cache_hit_rate": _rate(t["remote_cache_hits"], t["remote_cache_misses"]),
            "global_access_cycles": global_access(res),
            "baseline_total_cycles": (results[index[base_point]].get("totals", {}).get("total_cycles")
                                      if base_point in index else None),
            "baseline_global_access_cycles": (global_access(results[index[base_point]])
                                              if base_point in index else None),
            "global_overhead": ov,
            "overhead_vs_min_namespaces": ov / ov_min if ov is not None and ov_min else None,
            "fault_count": len(res["faults"]),
            "first_fault": (f"node {res['faults'][0]['node']}: {res['faults'][0]['reason']}"
                            if res["faults"] else ""),
        })
        rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in COLUMNS])
    return buf.getvalue()


def sweep_fault_free(rows: Sequence[dict]) -> bool:
    return all(not row.get("fault_count") for row in rows)
