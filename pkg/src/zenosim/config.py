"""Run configuration: latencies, structure sizes and the INI file format.

Example file::

    [system]
    mesh = 4x4
    mode = zeno            # or xbgas_baseline / baseline
    ntlb_entries = 32
    mdc_entries = 32
    remote_cache_blocks = 1024
    seed = 1

    [latency]
    dram_access = 100
    router_hop = 3
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Union

PAGE_BYTES = 4096


class Mode(enum.Enum):
    ZENO = "zeno"
    BASELINE = "xbgas_baseline"

    @classmethod
    def parse(cls, text: Union[str, "Mode"]) -> "Mode":
        if isinstance(text, Mode):
            return text
        text = text.strip().lower()
        if text in ("baseline", "xbgas", "xbgas_baseline"):
            return cls.BASELINE
        if text == "zeno":
            return cls.ZENO
        raise ValueError(f"unknown mode {text!r}")


class MissPolicy(enum.Enum):
    FETCH = "fetch"
    FAULT = "fault"


@dataclass(frozen=True)
class LatencyConfig:
    """Cycle costs. Defaults are typical published figures, not measured ones."""

    l1_hit: int = 2
    l2_hit: int = 10
    dram_access: int = 100
    nlb_lookup: int = 2
    walker_step: int = 10
    router_hop: int = 3
    link_flit: int = 5
    flit_bytes: int = 8

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if self.flit_bytes < 1:
            raise ValueError("flit_bytes must be >= 1")

    def scaled(self, name: str, factor: float) -> "LatencyConfig":
        return replace(self, **{name: int(round(getattr(self, name) * factor))})


LATENCY_FIELDS = ("l1_hit", "l2_hit", "dram_access", "nlb_lookup", "walker_step", "router_hop", "link_flit")


@dataclass(frozen=True)
class SystemConfig:
    mesh_width: int = 2
    mesh_height: int = 2
    ntlb_entries: int = 32
    mdc_entries: int = 32
    ntlb_ways: int = 0
    mdc_ways: int = 0
    l1_kb: int = 32
    l1_ways: int = 8
    l2_kb: int = 256
    l2_ways: int = 8
    line_bytes: int = 64
    remote_cache_blocks: int = 1024
    shared_bytes: int = 65536
    latency: LatencyConfig = field(default_factory=LatencyConfig)
    mode: Mode = Mode.ZENO
    mdc_miss_policy: MissPolicy = MissPolicy.FETCH
    seed: int = 1
    max_cycles: int = 10**9

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        object.__setattr__(self, "mdc_miss_policy", MissPolicy(self.mdc_miss_policy))
        for name in ("mesh_width", "mesh_height", "ntlb_entries", "mdc_entries", "l1_kb", "l2_kb",
                     "line_bytes", "remote_cache_blocks", "shared_bytes", "max_cycles"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.shared_bytes % PAGE_BYTES:
            raise ValueError("shared_bytes must be a multiple of the page size")

    @property
    def node_count(self) -> int:
        return self.mesh_width * self.mesh_height

    @property
    def mesh(self) -> str:
        return f"{self.mesh_width}x{self.mesh_height}"

    def with_mesh(self, mesh: str) -> "SystemConfig":
        w, h = parse_mesh(mesh)
        return replace(self, mesh_width=w, mesh_height=h)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["mdc_miss_policy"] = self.mdc_miss_policy.value
        return d


def parse_mesh(text: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"mesh must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise ValueError("mesh dimensions must be >= 1")
    return w, h


_INT_KEYS = {f.name for f in fields(SystemConfig)} - {"latency", "mode", "mdc_miss_policy"}


def config_from_mapping(system: dict, latency: dict | None = None, base: SystemConfig | None = None) -> SystemConfig:
    cfg = base or SystemConfig()
    updates: dict = {}
    for key, value in system.items():
        key = key.strip().lower()
        if key == "mesh":
            updates["mesh_width"], updates["mesh_height"] = parse_mesh(str(value))
        elif key == "mode":
            updates["mode"] = Mode.parse(str(value))
        elif key == "mdc_miss_policy":
            updates["mdc_miss_policy"] = MissPolicy(str(value).strip().lower())
        elif key in _INT_KEYS:
            updates[key] = int(str(value), 0)
        else:
            raise ValueError(f"unknown [system] key {key!r}")
    lat = cfg.latency
    if latency:
        known = {f.name for f in fields(LatencyConfig)}
        lat_updates = {}
        for key, value in latency.items():
            if key not in known:
                raise ValueError(f"unknown [latency] key {key!r}")
            lat_updates[key] = int(str(value), 0)
        lat = replace(lat, **lat_updates)
    return replace(cfg, latency=lat, **updates)


def load_config(path: Union[str, Path], base: SystemConfig | None = None) -> SystemConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    unknown = set(parser.sections()) - {"system", "latency", "sweep", "benchmark"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    system = dict(parser["system"]) if parser.has_section("system") else {}
    latency = dict(parser["latency"]) if parser.has_section("latency") else {}
    return config_from_mapping(system, latency, base)


def dump_config(cfg: SystemConfig) -> str:
    lines = ["[system]", f"mesh = {cfg.mesh}"]
    for f in fields(SystemConfig):
        if f.name in ("mesh_width", "mesh_height", "latency"):
            continue
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {value.value if isinstance(value, enum.Enum) else value}")
    lines.append("")
    lines.append("[latency]")
    for f in fields(LatencyConfig):
        lines.append(f"{f.name} = {getattr(cfg.latency, f.name)}")
    return "\n".join(lines) + "\n"
