"""Cycle-approximate simulator for a mesh of RISC-V style nodes with namespace capabilities."""
from .asm import ParseError, Program, format_program, parse_program
from .capability import (AccessKind, CapabilityError, Fault, NamespaceDirectory, NamespaceMetadata, Perms,
                         TaggedWord, check_access)
from .config import LatencyConfig, Mode, SystemConfig, load_config
from .functional import FunctionalMachine, run_functional
from .node import PerfCounters
from .system import Deadlock, Machine, RunReport, aggregate_fractions, run, simulate

__version__ = "0.1.0"

__all__ = [
    "AccessKind", "CapabilityError", "Deadlock", "Fault", "FunctionalMachine", "LatencyConfig", "Machine",
    "Mode", "NamespaceDirectory", "NamespaceMetadata", "ParseError", "Perms", "PerfCounters", "Program",
    "RunReport", "SystemConfig", "TaggedWord", "aggregate_fractions", "check_access", "format_program",
    "load_config", "parse_program", "run", "run_functional", "simulate",
]
