"""Command line front end: ``zenosim run|sweep|gen|check``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .asm import ParseError, parse_program
from .config import Mode, SystemConfig, load_config
from .system import Deadlock, simulate


def _base_config(args, use_mesh: bool = True) -> SystemConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else SystemConfig()
    if use_mesh and getattr(args, "mesh", None):
        cfg = cfg.with_mesh(args.mesh)
    updates = {}
    if getattr(args, "ntlb", None):
        updates["ntlb_entries"] = args.ntlb
    if getattr(args, "mdc", None):
        updates["mdc_entries"] = args.mdc
    if getattr(args, "mode", None):
        updates["mode"] = Mode.parse(args.mode)
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    return replace(cfg, **updates)


def _bench_spec(args, cfg: SystemConfig):
    from .bench import BenchmarkSpec

    kw = {"kind": args.bench, "seed": args.seed if args.seed is not None else cfg.seed}
    if args.namespaces:
        kw["namespace_count"] = args.namespaces
    if args.elements:
        kw["element_count"] = args.elements
    return BenchmarkSpec(**kw)


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _base_config(args)
    if args.program:
        programs = []
        for path in args.program:
            try:
                programs.append(parse_program(Path(path).read_text(encoding="utf-8")))
            except ParseError as err:
                print(f"{path}: {err}", file=sys.stderr)
                return 2
        if len(programs) == 1:
            programs = programs[0]
        elif len(programs) != cfg.node_count:
            print(f"got {len(programs)} programs for {cfg.node_count} nodes", file=sys.stderr)
            return 2
    else:
        from .bench import generate

        programs = generate(_bench_spec(args, cfg), cfg.node_count)
    try:
        report, _ = simulate(cfg, programs)
    except Deadlock as err:
        print(f"deadlock: {err}", file=sys.stderr)
        return 1
    _write(report.to_json() + "\n", args.out)
    for fault in report.faults:
        print(f"node {fault['node']} faulted: {fault['reason']} at pc {fault['pc']} (line {fault['line']})",
              file=sys.stderr)
    return 0 if report.fault_free else 1


def cmd_sweep(args) -> int:
    from .bench.sweep import SweepSpec, load_sweep, rows_to_csv, run_sweep, sweep_fault_free
    from .bench import BenchmarkSpec

    if args.spec:
        spec, bench = load_sweep(args.spec)
    else:
        cfg = _base_config(args, use_mesh=False)
        spec = SweepSpec(meshes=(cfg.mesh,), base=cfg)
        bench = BenchmarkSpec(kind=args.bench or "sort")
    updates = {}
    if args.mesh:
        updates["meshes"] = tuple(args.mesh.split(","))
    if args.ntlb:
        updates["ntlb_sizes"] = (args.ntlb,)
    if args.mdc:
        updates["mdc_sizes"] = (args.mdc,)
    if args.namespaces:
        updates["namespace_counts"] = (args.namespaces,)
    if args.mode:
        updates["modes"] = (args.mode,)
    if updates:
        spec = replace(spec, **updates)
    if args.seed is not None:
        bench = bench.with_(seed=args.seed)
    if args.bench and args.spec:
        bench = bench.with_(kind=args.bench)
    if args.elements:
        bench = bench.with_(element_count=args.elements)
    rows = run_sweep(spec, bench, jobs=args.jobs)
    _write(rows_to_csv(rows), args.out)
    return 0 if sweep_fault_free(rows) else 1


def cmd_gen(args) -> int:
    from .bench import generate_text

    cfg = _base_config(args)
    texts = generate_text(_bench_spec(args, cfg), cfg.node_count)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, text in enumerate(texts):
            (out / f"node{i}.zasm").write_text(text, encoding="utf-8")
        print(f"wrote {len(texts)} programs to {out}")
    else:
        sys.stdout.write(texts[args.node])
    return 0


def cmd_check(args) -> int:
    from .checks import run_checks

    ok = True
    for result in run_checks(quick=args.quick):
        print(result.line())
        ok = ok and result.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zenosim", description="Namespace-capability multicore simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, bench_default: Optional[str] = "get"):
        p.add_argument("--config", help="INI file with [system] and [latency] sections")
        p.add_argument("--mesh", help="mesh as WxH (sweep: comma separated list)")
        p.add_argument("--ntlb", type=int, help="N-TLB entries")
        p.add_argument("--mdc", type=int, help="metadata cache entries")
        p.add_argument("--mode", choices=["zeno", "baseline", "xbgas_baseline"])
        p.add_argument("--seed", type=int)
        p.add_argument("--namespaces", type=int, help="namespace count for the workload")
        p.add_argument("--bench", default=bench_default, help="get, random or sort")
        p.add_argument("--elements", type=int, help="sort: total integers; random: accesses per node")
        p.add_argument("--out", help="output file (gen: directory)")

    p = sub.add_parser("run", help="simulate one configuration and print the JSON report")
    common(p)
    p.add_argument("program", nargs="*", help=".zasm file (one for all nodes, or one per node)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a configuration sweep and emit CSV")
    common(p, bench_default=None)
    p.add_argument("spec", nargs="?", help="sweep INI file with [sweep] and [benchmark] sections")
    p.add_argument("--jobs", type=int, default=1, help="host worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="emit benchmark assembly")
    common(p)
    p.add_argument("--node", type=int, default=0, help="node whose program goes to stdout")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("check", help="run the invariant and oracle suites")
    p.add_argument("--quick", action="store_true", help="smaller case counts")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
