import collections

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import config
from zenosim.bench import BenchKind, BenchmarkSpec, generate, generate_text, xorshift32_stream
from zenosim.bench.generators import (
    get_transfers_expected,
    integer_sort_output_offset,
    random_access_plan,
    random_access_result_offset,
    sort_keys,
    sort_layout,
    sort_reference,
)
from zenosim.config import Mode
from zenosim.functional import run_functional
from zenosim.system import simulate


def test_xorshift32_first_values():
    # Marsaglia's xorshift32 with shifts (13, 17, 5), computed by hand from seed 1
    x = 1
    x ^= (x << 13) & 0xFFFFFFFF
    x ^= x >> 17
    x ^= (x << 5) & 0xFFFFFFFF
    stream = xorshift32_stream(1)
    assert next(stream) == x == 270369
    assert next(stream) == 67634689


def test_spec_defaults_and_validation():
    assert BenchmarkSpec(kind="sort").element_count == 65536
    assert BenchmarkSpec(kind="random").element_count == 4096
    assert BenchKind.parse("IntegerSort") is BenchKind.INTEGER_SORT
    with pytest.raises(ValueError):
        BenchmarkSpec(namespace_count=0)


def test_get_transfers_four_nodes():
    texts = generate_text(BenchmarkSpec(), 4)
    assert len(texts) == 4
    report, m = simulate(config("2x2"), generate(BenchmarkSpec(), 4))
    assert report.fault_free
    want = get_transfers_expected(4)
    assert len(want) == 4 * 4096
    for node in m.nodes:
        assert bytes(node.memory.private[:len(want)]) == want
    # every node reads its own plus three remote namespaces
    assert report.total("remote_requests") > 0


def test_get_transfers_single_node_is_local():
    report, m = simulate(config("1x1"), generate(BenchmarkSpec(), 1))
    assert report.fault_free
    assert report.total("global_mem_cycles") == 0
    assert bytes(m.nodes[0].memory.private[:4096]) == get_transfers_expected(1)


def test_random_access_namespaces_spread_evenly():
    spec = BenchmarkSpec(kind="random", element_count=16)
    report, m = simulate(config("4x4"), generate(spec, 16))
    assert report.fault_free
    roots = [e for e in m.directory.entries() if e.ns_id != m.mailbox.value]
    assert len(roots) == 128
    assert collections.Counter(e.ns_id >> 48 for e in roots) == {n: 8 for n in range(16)}


@given(st.integers(1, 16), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_random_plan_offsets_in_bounds(nodes, ns, seed):
    for node_plan in random_access_plan(nodes, ns, 32768, 20, seed):
        for k, off in node_plan:
            assert 0 <= k < ns
            assert 0 <= off <= 32764 and off % 4 == 0


def test_random_access_same_seed_same_program():
    a = BenchmarkSpec(kind="random", element_count=64, seed=9)
    assert generate_text(a, 4) == generate_text(a, 4)
    assert generate_text(a, 4) != generate_text(a.with_(seed=10), 4)


def test_random_access_sum_matches_host():
    spec = BenchmarkSpec(kind="random", element_count=40, namespace_count=8)
    report, m = simulate(config("2x2"), generate(spec, 4))
    plan = random_access_plan(4, 8, spec.ns_bytes, 40, spec.seed)
    at = random_access_result_offset(8, 40)
    for node, node_plan in enumerate(plan):
        # namespace k holds (k << 32) | page_offset in the first dword of every page, zero elsewhere
        want = sum(off if off % 4096 == 0 else k if off % 4096 == 4 else 0 for k, off in node_plan)
        got = int.from_bytes(m.nodes[node].memory.private[at:at + 8], "little")
        assert got == want


def test_sort_bucket_means():
    lay = sort_layout(16, 65536, 128, 1)
    assert len(lay.keys) == 65536 and sum(len(s) for s in lay.shards) == 65536
    counts = collections.Counter(k >> lay.shift for k in lay.keys)
    assert sum(counts.values()) / 128 == 512


@pytest.mark.parametrize("mesh, total, buckets", [("1x1", 512, 1), ("2x2", 1024, 16), ("3x3", 999, 8),
                                                  ("2x1", 3, 4)])
def test_sort_output_equals_host_sort(mesh, total, buckets):
    spec = BenchmarkSpec(kind="sort", element_count=total, namespace_count=buckets, seed=5)
    cfg = config(mesh)
    report, m = simulate(cfg, generate(spec, cfg.node_count))
    assert report.fault_free
    at = integer_sort_output_offset(cfg.node_count, total, buckets, 5)
    raw = bytes(m.nodes[0].memory.private[at:at + 4 * total])
    assert [int.from_bytes(raw[i:i + 4], "little") for i in range(0, len(raw), 4)] == sort_reference(spec)
    assert sort_reference(spec) == sorted(sort_keys(total, 5))


@settings(max_examples=8, deadline=None)
@given(st.sampled_from(["get", "random", "sort"]), st.sampled_from(["1x1", "2x1", "2x2"]),
       st.sampled_from(list(Mode)), st.integers(1, 1000))
def test_generated_programs_terminate_without_faults(kind, mesh, mode, seed):
    spec = BenchmarkSpec(kind=kind, element_count=256 if kind == "sort" else 32, namespace_count=16, seed=seed)
    cfg = config(mesh, mode)
    report, timed = simulate(cfg, generate(spec, cfg.node_count))
    assert report.fault_free
    assert timed.architectural_state() == run_functional(cfg, generate(spec, cfg.node_count)).architectural_state()
