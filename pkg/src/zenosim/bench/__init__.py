"""Benchmark program generators and experiment sweeps."""
from .generators import BenchKind, BenchmarkSpec, generate, generate_text, xorshift32_stream
from .sweep import SweepSpec, run_sweep

__all__ = ["BenchKind", "BenchmarkSpec", "generate", "generate_text", "xorshift32_stream",
           "SweepSpec", "run_sweep"]
