from dataclasses import replace

import pytest

from zenosim.asm import parse_program
from zenosim.config import LatencyConfig, Mode, SystemConfig
from zenosim.system import Machine, simulate

HALT = "halt\n"


def config(mesh="1x1", mode=Mode.ZENO, **kw) -> SystemConfig:
    return replace(SystemConfig().with_mesh(mesh), mode=mode, **kw)


def run_asm(sources, mesh="1x1", mode=Mode.ZENO, trace=None, **kw):
    """Simulate assembly text (one string for every node, or a list with one per node)."""
    cfg = config(mesh, mode, **kw)
    if isinstance(sources, str):
        progs = parse_program(sources)
    else:
        progs = [parse_program(s) for s in sources]
    return simulate(cfg, progs, trace)


def machine(sources, mesh="1x1", mode=Mode.ZENO, **kw) -> Machine:
    cfg = config(mesh, mode, **kw)
    progs = parse_program(sources) if isinstance(sources, str) else [parse_program(s) for s in sources]
    return Machine(cfg, progs)


def mark_delta(machine_, node, a, b, field="total_cycles"):
    marks = dict(machine_.nodes[node].marks)
    return marks[b][field] - marks[a][field]


@pytest.fixture
def lat() -> LatencyConfig:
    return LatencyConfig()


# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
